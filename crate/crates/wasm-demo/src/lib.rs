//! Browser bindings for three interactive views: link-level curves, the
//! beam pattern of a codebook entry, and natural-neighbour CQI maps.

use std::f64::consts::PI;

use fdmimo::codebook::{build_codebook, BeamConfig};
use fdmimo::linkphy::{bicm_capacity, bler, LinkConfig};
use fdmimo::spatial::{nni_cqi_with, NaturalNeighbor};
use num_complex::Complex64;
use wasm_bindgen::prelude::*;

fn js(e: fdmimo::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn grid(from: f64, to: f64, steps: usize) -> impl Iterator<Item = f64> {
    let n = steps.max(2);
    (0..n).map(move |i| from + (to - from) * i as f64 / (n - 1) as f64)
}

/// BLER of `cqi` at `steps` SINRs from `from_db` to `to_db`.
#[wasm_bindgen]
pub fn bler_curve(cqi: u8, snr_gap_db: f64, bler_slope: f64, from_db: f64, to_db: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    let cfg = LinkConfig { snr_gap_db, bler_slope, ..LinkConfig::default() };
    cfg.validate().map_err(js)?;
    grid(from_db, to_db, steps).map(|db| bler(10f64.powf(db / 10.0), cqi, &cfg).map_err(js)).collect()
}

/// BICM capacity in bits per symbol of a `2^order`-QAM constellation.
#[wasm_bindgen]
pub fn bicm_curve(order: u32, from_db: f64, to_db: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    grid(from_db, to_db, steps).map(|db| bicm_capacity(10f64.powf(db / 10.0), order).map_err(js)).collect()
}

/// Number of rank-1 entries of the 8-port-per-polarization codebook.
#[wasm_bindgen]
pub fn rank1_entries() -> usize {
    build_codebook(&BeamConfig::default(), 1).map(|c| c.len()).unwrap_or(0)
}

/// Array gain in dB of rank-1 entry `pmi` over `points` directions with
/// `u = sin(azimuth)` spanning `[-1, 1]`, both polarizations combined.
#[wasm_bindgen]
pub fn beam_pattern(pmi: usize, points: usize) -> Result<Vec<f64>, JsError> {
    let cb = build_codebook(&BeamConfig::default(), 1).map_err(js)?;
    let e = cb.get(pmi).ok_or_else(|| JsError::new(&format!("PMI {pmi} outside 0..{}", cb.len())))?;
    let n = e.w.nrows() / 2;
    Ok(grid(-1.0, 1.0, points)
        .map(|u| {
            let pol = |off: usize| -> Complex64 {
                (0..n).map(|i| Complex64::from_polar(1.0, -PI * i as f64 * u) * e.w[(off + i, 0)]).sum()
            };
            let g = pol(0).norm_sqr() + pol(n).norm_sqr();
            10.0 * g.max(1e-6).log10()
        })
        .collect())
}

/// Interpolated CQI on a `width × height` raster over `[x0, x1] × [y0, y1]`,
/// row-major from `y0`. Cells outside the sample hull copy the nearest CQI.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn nni_map(xs: &[f64], ys: &[f64], cqis: &[u8], width: usize, height: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Vec<u8>, JsError> {
    if xs.len() != ys.len() || xs.len() != cqis.len() {
        return Err(JsError::new("xs, ys and cqis differ in length"));
    }
    let pts: Vec<[f64; 2]> = xs.iter().zip(ys).map(|(&x, &y)| [x, y]).collect();
    let nn = NaturalNeighbor::new(&pts).map_err(js)?;
    let mut out = Vec::with_capacity(width * height);
    for y in grid(y0, y1, height) {
        for x in grid(x0, x1, width) {
            out.push(nni_cqi_with(&nn, cqis, [x, y]).map_err(js)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beam_peaks_at_its_direction() {
        // Beam 4 of 32 points at u = 4/16.
        let p = beam_pattern(4 * 4, 801).unwrap();
        let best = p.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0;
        let u = -1.0 + 2.0 * best as f64 / 800.0;
        assert!((u - 0.25).abs() < 0.01, "peak at {u}");
        assert!((p[best] - 10.0 * 8f64.log10()).abs() < 0.05);
    }

    #[test]
    fn curves_have_expected_shape() {
        let b = bler_curve(7, 2.0, 2.0, -10.0, 30.0, 41).unwrap();
        assert!(b.windows(2).all(|w| w[1] <= w[0]));
        let c = bicm_curve(4, -10.0, 40.0, 11).unwrap();
        assert!((c[10] - 4.0).abs() < 1e-6);
        assert_eq!(rank1_entries(), 128);
    }

    #[test]
    fn nni_map_recovers_constant() {
        let m = nni_map(&[0.0, 1.0, 0.0, 1.0], &[0.0, 0.0, 1.0, 1.0], &[9; 4], 5, 5, -0.5, 1.5, -0.5, 1.5).unwrap();
        assert!(m.iter().all(|&c| c == 9));
    }
}
