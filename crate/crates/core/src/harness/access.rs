//! Channel access logging that separates fitting reads from evaluation
//! reads.

use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Mutex;

use crate::channel::{ChannelDataset, ChannelSlice, Extents, Location};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Fitting,
    Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessRecord {
    pub phase: Phase,
    pub t: usize,
    pub q: usize,
    pub test: bool,
}

/// Dataset view that records every slice read with the current phase.
#[derive(Debug)]
pub struct TrackedDataset<'a> {
    ds: &'a ChannelDataset,
    is_test: Vec<bool>,
    phase: AtomicU8,
    log: Mutex<Vec<AccessRecord>>,
}

impl<'a> TrackedDataset<'a> {
    /// `test` holds location indices withheld from fitting.
    pub fn new(ds: &'a ChannelDataset, test: &[usize]) -> Self {
        let mut is_test = vec![false; ds.locations().len()];
        for &q in test {
            is_test[q] = true;
        }
        Self { ds, is_test, phase: AtomicU8::new(0), log: Mutex::new(Vec::new()) }
    }

    pub fn set_phase(&self, p: Phase) {
        self.phase.store(p as u8, Ordering::SeqCst);
    }

    pub fn phase(&self) -> Phase {
        if self.phase.load(Ordering::SeqCst) == 0 {
            Phase::Fitting
        } else {
            Phase::Evaluation
        }
    }

    pub fn extents(&self) -> Extents {
        self.ds.extents()
    }

    pub fn n_tx(&self) -> usize {
        self.ds.n_tx()
    }

    pub fn max_layers(&self) -> usize {
        self.ds.max_layers()
    }

    pub fn locations(&self) -> &[Location] {
        self.ds.locations()
    }

    pub fn is_test(&self, q: usize) -> bool {
        self.is_test[q]
    }

    pub fn slice(&self, t: usize, q: usize) -> ChannelSlice {
        let rec = AccessRecord { phase: self.phase(), t, q, test: self.is_test[q] };
        self.log.lock().expect("access log poisoned").push(rec);
        self.ds.slice(t, q)
    }

    pub fn records(&self) -> Vec<AccessRecord> {
        self.log.lock().expect("access log poisoned").clone()
    }

    /// Reads of withheld locations made while fitting. Zero for an honest
    /// protocol.
    pub fn test_reads_while_fitting(&self) -> usize {
        self.log.lock().expect("access log poisoned").iter().filter(|r| r.test && r.phase == Phase::Fitting).count()
    }
}
