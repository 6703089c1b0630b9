//! Synthetic embedded corpora for tests and demos.

use crate::error::{DesignError, Result};
use crate::sentence::{EmbeddedSentence, Source};

/// `clusters` groups of `per_cluster` sentences. Cluster `c` lives in the
/// plane spanned by basis vectors `2c` and `2c + 1`; member `j` sits at angle
/// `j·θ` in that plane with `(per_cluster − 1)·θ ≤ 0.45`, so cosines within a
/// cluster are at least `cos 0.45 > 0.9` and cosines across clusters are 0.
/// Ids are `c{c:02}-s{j:02}`; token counts cycle through 3..=9.
pub fn planted_clusters(clusters: usize, per_cluster: usize, dim: usize, source: Source) -> Result<Vec<EmbeddedSentence>> {
    if dim < 2 * clusters {
        return Err(DesignError::InvalidParameter(format!("dimension {dim} cannot hold {clusters} orthogonal clusters")));
    }
    let theta = if per_cluster > 1 { (0.45 / (per_cluster - 1) as f64).min(0.1) } else { 0.0 };
    let mut out = Vec::with_capacity(clusters * per_cluster);
    for c in 0..clusters {
        for j in 0..per_cluster {
            let mut v = vec![0.0; dim];
            let angle = j as f64 * theta;
            v[2 * c] = angle.cos();
            v[2 * c + 1] = angle.sin();
            let len = 3 + (5 * c + j) % 7;
            let tokens = (0..len).map(|t| (1 + 10 * c + t) as u32).collect();
            out.push(EmbeddedSentence::new(format!("c{c:02}-s{j:02}"), tokens, v, source)?);
        }
    }
    Ok(out)
}
