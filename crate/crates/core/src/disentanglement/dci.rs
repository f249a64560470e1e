//! DCI disentanglement from gradient-boosted regression tree importances.

use serde::{Deserialize, Serialize};

use super::{CodeFactorMatrix, DisentanglementError, FactorKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for BoostingConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    sum: f64,
    count: usize,
}

#[derive(Debug, Clone, Copy)]
struct Split {
    gain: f64,
    feature: usize,
    /// Samples with `x <= threshold` go left.
    threshold: f64,
}

/// Total squared-error reduction contributed by each feature over a boosted
/// ensemble fit to `target`.
///
/// Trees grow level by level using presorted feature orders, so each level
/// costs one pass over every feature column.
pub fn boosted_importance(features: &[Vec<f64>], target: &[f64], cfg: &BoostingConfig) -> Vec<f64> {
    let d = features.len();
    let n = target.len();
    let mut importance = vec![0.0; d];
    if n == 0 || d == 0 {
        return importance;
    }
    let sorted: Vec<Vec<usize>> = features
        .iter()
        .map(|col| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mean = target.iter().sum::<f64>() / n as f64;
    let mut pred = vec![mean; n];
    let mut residual = vec![0.0; n];
    let mut node_of = vec![0usize; n];

    for _ in 0..cfg.rounds {
        for i in 0..n {
            residual[i] = target[i] - pred[i];
        }
        node_of.fill(0);
        let mut nodes = vec![Node {
            sum: residual.iter().sum(),
            count: n,
        }];
        // Nodes at the current frontier that may still split.
        let mut frontier = vec![0usize];
        for _depth in 0..cfg.max_depth {
            let mut best: Vec<Option<Split>> = vec![None; nodes.len()];
            let mut left_sum = vec![0.0; nodes.len()];
            let mut left_count = vec![0usize; nodes.len()];
            let mut last = vec![f64::NAN; nodes.len()];
            let open: Vec<bool> = {
                let mut o = vec![false; nodes.len()];
                for &f in &frontier {
                    o[f] = nodes[f].count >= 2 * cfg.min_leaf;
                }
                o
            };
            for (f, order) in sorted.iter().enumerate() {
                left_sum.fill(0.0);
                left_count.fill(0);
                last.fill(f64::NAN);
                let col = &features[f];
                for &i in order {
                    let nd = node_of[i];
                    if !open[nd] {
                        continue;
                    }
                    let x = col[i];
                    let lc = left_count[nd];
                    let node = nodes[nd];
                    if lc >= cfg.min_leaf && node.count - lc >= cfg.min_leaf && x != last[nd] {
                        let ls = left_sum[nd];
                        let rs = node.sum - ls;
                        let gain = ls * ls / lc as f64 + rs * rs / (node.count - lc) as f64
                            - node.sum * node.sum / node.count as f64;
                        if gain > best[nd].map_or(0.0, |s| s.gain) {
                            best[nd] = Some(Split {
                                gain,
                                feature: f,
                                threshold: last[nd],
                            });
                        }
                    }
                    left_sum[nd] += residual[i];
                    left_count[nd] += 1;
                    last[nd] = x;
                }
            }
            let mut children = vec![None; nodes.len()];
            let mut next = Vec::new();
            for &f in &frontier {
                if let Some(split) = best[f] {
                    importance[split.feature] += split.gain;
                    let l = nodes.len();
                    nodes.push(Node { sum: 0.0, count: 0 });
                    nodes.push(Node { sum: 0.0, count: 0 });
                    children[f] = Some((split, l));
                    next.extend([l, l + 1]);
                }
            }
            if next.is_empty() {
                break;
            }
            for i in 0..n {
                if let Some((split, l)) = children[node_of[i]] {
                    let child = if features[split.feature][i] <= split.threshold { l } else { l + 1 };
                    node_of[i] = child;
                    nodes[child].sum += residual[i];
                    nodes[child].count += 1;
                }
            }
            frontier = next;
        }
        for i in 0..n {
            let node = nodes[node_of[i]];
            pred[i] += cfg.learning_rate * node.sum / node.count as f64;
        }
    }
    importance
}

/// `D_z × K` importance matrix; column `k` is normalized to sum to one when it has any mass.
pub fn importance_matrix(m: &CodeFactorMatrix, cfg: &BoostingConfig) -> Vec<Vec<f64>> {
    let features: Vec<Vec<f64>> = (0..m.code_dims()).map(|j| m.code_column(j)).collect();
    let mut r = vec![vec![0.0; m.factor_count()]; m.code_dims()];
    for k in 0..m.factor_count() {
        let column = m.factor_column(k);
        let mut imp = vec![0.0; m.code_dims()];
        match m.factor_kinds[k] {
            FactorKind::Continuous => imp = boosted_importance(&features, &column, cfg),
            FactorKind::Categorical => {
                let mut classes = column.clone();
                classes.sort_by(f64::total_cmp);
                classes.dedup();
                for c in classes {
                    let target: Vec<f64> = column.iter().map(|&v| f64::from(u8::from(v == c))).collect();
                    let part = normalized(boosted_importance(&features, &target, cfg));
                    for (a, b) in imp.iter_mut().zip(part) {
                        *a += b;
                    }
                }
            }
        }
        for (row, v) in r.iter_mut().zip(normalized(imp)) {
            row[k] = v;
        }
    }
    r
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in &mut v {
            *x /= total;
        }
    }
    v
}

/// DCI disentanglement of an importance matrix (rows = codes, columns = factors).
/// An all-zero matrix scores 0 with a warning.
pub fn dci_from_importance(r: &[Vec<f64>]) -> Result<(f64, Vec<String>), DisentanglementError> {
    let k = r.first().map_or(0, Vec::len);
    if r.iter().any(|row| row.len() != k) {
        return Err(DisentanglementError::Shape("ragged importance matrix".into()));
    }
    if r.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DisentanglementError::NonFinite("importance entries must be finite and non-negative".into()));
    }
    let row_mass: Vec<f64> = r.iter().map(|row| row.iter().sum()).collect();
    let total: f64 = row_mass.iter().sum();
    if total <= 0.0 {
        return Ok((0.0, vec!["importance matrix is all zero; DCI set to 0".into()]));
    }
    if k < 2 {
        return Ok((1.0, Vec::new()));
    }
    let log_k = (k as f64).ln();
    let mut score = 0.0;
    for (row, &mass) in r.iter().zip(&row_mass) {
        if mass <= 0.0 {
            continue;
        }
        let first = row[0];
        let disentanglement = if row.iter().all(|&v| v == first) {
            0.0
        } else {
            let h: f64 = row
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| {
                    let p = v / mass;
                    -p * p.ln()
                })
                .sum();
            (1.0 - h / log_k).clamp(0.0, 1.0)
        };
        score += mass * disentanglement;
    }
    Ok((score / total, Vec::new()))
}
