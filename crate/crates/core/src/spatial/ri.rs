//! Conservative rank inference from nearby fixed ranks.

use crate::channel::Location;
use crate::error::{invalid, Error, Result};

/// Minimum fixed rank among the `n_ri` training locations nearest to
/// `query`. Locations tied in distance with the `n_ri`-th neighbour are all
/// included before taking the minimum.
pub fn infer_ri(train: &[(Location, usize)], query: &Location, n_ri: usize) -> Result<usize> {
    if n_ri == 0 {
        return Err(invalid("neighbour count must be positive"));
    }
    if train.len() < n_ri {
        return Err(Error::InvalidArgument(format!("{} training locations for {n_ri} neighbours", train.len())));
    }
    let mut by_dist: Vec<(f64, usize)> = train.iter().map(|(l, r)| (l.distance(query), *r)).collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    let cutoff = by_dist[n_ri - 1].0;
    let tol = 1e-12 * cutoff.max(1.0);
    Ok(by_dist.iter().take_while(|(d, _)| *d <= cutoff + tol).map(|(_, r)| *r).min().unwrap())
}
