//! Histogram mutual information and the mutual information gap.

use serde::{Deserialize, Serialize};

use super::{CodeFactorMatrix, DisentanglementError, FactorKind};

pub const DEFAULT_BINS: usize = 20;

/// Bin index of every entry of `column`.
///
/// Categorical columns and columns with at most `bins` distinct values get one
/// bin per distinct value; other columns get equal-count quantile bins from
/// ranks, with tied values always sharing a bin.
pub fn quantile_bins(column: &[f64], bins: usize, categorical: bool) -> (Vec<usize>, usize) {
    let n = column.len();
    if n == 0 {
        return (Vec::new(), 0);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
    let mut distinct = 1;
    for w in order.windows(2) {
        if column[w[0]] != column[w[1]] {
            distinct += 1;
        }
    }
    let mut out = vec![0usize; n];
    if categorical || distinct <= bins {
        let mut b = 0;
        for (r, &i) in order.iter().enumerate() {
            if r > 0 && column[i] != column[order[r - 1]] {
                b += 1;
            }
            out[i] = b;
        }
        return (out, distinct);
    }
    let mut first_rank = 0;
    for (r, &i) in order.iter().enumerate() {
        if r > 0 && column[i] != column[order[r - 1]] {
            first_rank = r;
        }
        out[i] = first_rank * bins / n;
    }
    (out, bins)
}

fn plugin_sum(mut terms: Vec<f64>) -> f64 {
    // Sorting makes the sum independent of argument order.
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>().max(0.0)
}

/// Plug-in entropy (nats) of a binned column.
pub fn entropy(bins: &[usize], count: usize) -> f64 {
    let n = bins.len() as f64;
    let mut hist = vec![0usize; count];
    for &b in bins {
        hist[b] += 1;
    }
    plugin_sum(
        hist.into_iter()
            .filter(|&c| c > 0)
            .map(|c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .collect(),
    )
}

/// Plug-in mutual information (nats) of two binned columns from their joint histogram.
pub fn mutual_information(a: &[usize], na: usize, b: &[usize], nb: usize) -> f64 {
    assert_eq!(a.len(), b.len(), "columns must be the same length");
    let n = a.len() as f64;
    let mut joint = vec![0usize; na * nb];
    let mut ma = vec![0usize; na];
    let mut mb = vec![0usize; nb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * nb + j] += 1;
        ma[i] += 1;
        mb[j] += 1;
    }
    let mut terms = Vec::new();
    for i in 0..na {
        for j in 0..nb {
            let c = joint[i * nb + j];
            if c == 0 {
                continue;
            }
            let (c, x, y) = (c as f64, ma[i] as f64, mb[j] as f64);
            terms.push(c / n * ((c * n) / (x * y)).ln());
        }
    }
    plugin_sum(terms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiHeatmap {
    /// `K × D_z`, row per factor.
    pub values: Vec<Vec<f64>>,
    pub bins: usize,
    /// Entropy of each binned factor.
    pub factor_entropy: Vec<f64>,
}

impl MiHeatmap {
    pub fn to_csv(&self) -> String {
        let dz = self.values.first().map_or(0, Vec::len);
        let mut out = String::from("factor");
        for j in 0..dz {
            out.push_str(&format!(",z{j}"));
        }
        out.push('\n');
        for (k, row) in self.values.iter().enumerate() {
            out.push_str(&format!("v{k}"));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn pairwise_mi(m: &CodeFactorMatrix, bins: usize) -> Result<MiHeatmap, DisentanglementError> {
    if bins < 2 {
        return Err(DisentanglementError::Config(format!("need at least 2 bins, got {bins}")));
    }
    let codes: Vec<(Vec<usize>, usize)> = (0..m.code_dims())
        .map(|j| quantile_bins(&m.code_column(j), bins, false))
        .collect();
    let mut values = Vec::with_capacity(m.factor_count());
    let mut factor_entropy = Vec::with_capacity(m.factor_count());
    for k in 0..m.factor_count() {
        let categorical = m.factor_kinds[k] == FactorKind::Categorical;
        let (fb, fc) = quantile_bins(&m.factor_column(k), bins, categorical);
        factor_entropy.push(entropy(&fb, fc));
        values.push(codes.iter().map(|(cb, cc)| mutual_information(&fb, fc, cb, *cc)).collect());
    }
    Ok(MiHeatmap {
        values,
        bins,
        factor_entropy,
    })
}

/// Mean over factors of the normalized gap between the two most informative codes.
/// Constant factors are skipped and reported in the returned warnings.
pub fn mig_from_heatmap(h: &MiHeatmap) -> Result<(f64, Vec<String>), DisentanglementError> {
    let mut warnings = Vec::new();
    let mut total = 0.0;
    let mut used = 0usize;
    for (k, (row, &hk)) in h.values.iter().zip(&h.factor_entropy).enumerate() {
        if row.len() < 2 {
            return Err(DisentanglementError::TooFewDims(row.len()));
        }
        if hk <= 0.0 {
            warnings.push(format!("factor {k} is constant and was excluded from MIG"));
            continue;
        }
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        total += ((sorted[0] - sorted[1]) / hk).clamp(0.0, 1.0);
        used += 1;
    }
    if used == 0 {
        return Err(DisentanglementError::Degenerate("every factor is constant".into()));
    }
    Ok((total / used as f64, warnings))
}

pub fn mig(m: &CodeFactorMatrix, bins: usize) -> Result<f64, DisentanglementError> {
    Ok(mig_from_heatmap(&pairwise_mi(m, bins)?)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_bins_are_equal_count_and_tie_safe() {
        let col: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (b, n) = quantile_bins(&col, 4, false);
        assert_eq!(n, 4);
        for q in 0..4 {
            assert_eq!(b.iter().filter(|&&x| x == q).count(), 25);
        }
        let ties = [1.0, 1.0, 1.0, 2.0, 3.0, 3.0];
        let (b, n) = quantile_bins(&ties, 2, false);
        assert_eq!(n, 2);
        assert_eq!(b, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn mi_of_identical_columns_is_entropy() {
        let a: Vec<usize> = (0..1000).map(|i| i % 7).collect();
        let h = entropy(&a, 7);
        assert!((mutual_information(&a, 7, &a, 7) - h).abs() < 1e-12);
        assert!((h - 7f64.ln()).abs() < 1e-3);
    }
}
