//! t-tests and ANOVAs with two-sided p-values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Paired,
    Independent,
    Oneway,
    Repeated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub design: Design,
    pub statistic: f64,
    pub df1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df2: Option<f64>,
    pub p: f64,
}

impl TestResult {
    pub fn significant(&self, threshold: f64) -> bool {
        self.p < threshold
    }
}

/// Per-comparison threshold for `m` simultaneous tests at family-wise level `alpha`.
pub fn bonferroni_threshold(alpha: f64, m: usize) -> f64 {
    alpha / m.max(1) as f64
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sum_sq_dev(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m) * (v - m)).sum()
}

fn t_p_value(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

fn f_p_value(f: f64, df1: f64, df2: f64) -> f64 {
    let dist = FisherSnedecor::new(df1, df2).expect("positive degrees of freedom");
    (1.0 - dist.cdf(f)).clamp(0.0, 1.0)
}

fn check_groups(groups: &[&[f64]], min: usize) -> Result<(), AnalyticsError> {
    for (i, g) in groups.iter().enumerate() {
        if g.len() < min {
            return Err(AnalyticsError::Insufficient(format!(
                "group {i} has {} values, need {min}",
                g.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(AnalyticsError::Insufficient(format!("group {i} has non-finite values")));
        }
    }
    Ok(())
}

/// Paired t-test on aligned samples. Identical samples give `t = 0, p = 1`;
/// any other zero-variance difference is degenerate.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TestResult, AnalyticsError> {
    check_groups(&[a, b], 2)?;
    if a.len() != b.len() {
        return Err(AnalyticsError::Insufficient(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let md = mean(&diff);
    let var = sum_sq_dev(&diff, md) / (n - 1.0);
    if var == 0.0 {
        if diff.iter().all(|&d| d == 0.0) {
            return Ok(TestResult {
                design: Design::Paired,
                statistic: 0.0,
                df1: n - 1.0,
                df2: None,
                p: 1.0,
            });
        }
        return Err(AnalyticsError::Degenerate("paired differences have zero variance".into()));
    }
    let t = md / (var / n).sqrt();
    Ok(TestResult {
        design: Design::Paired,
        statistic: t,
        df1: n - 1.0,
        df2: None,
        p: t_p_value(t, n - 1.0),
    })
}

/// Student's two-sample t-test with pooled variance.
pub fn independent_t(a: &[f64], b: &[f64]) -> Result<TestResult, AnalyticsError> {
    check_groups(&[a, b], 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let df = na + nb - 2.0;
    let pooled = (sum_sq_dev(a, ma) + sum_sq_dev(b, mb)) / df;
    if pooled == 0.0 {
        return Err(AnalyticsError::Degenerate("both groups have zero variance".into()));
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TestResult {
        design: Design::Independent,
        statistic: t,
        df1: df,
        df2: None,
        p: t_p_value(t, df),
    })
}

pub fn oneway_anova(groups: &[&[f64]]) -> Result<TestResult, AnalyticsError> {
    if groups.len() < 2 {
        return Err(AnalyticsError::Insufficient("ANOVA needs at least two groups".into()));
    }
    check_groups(groups, 2)?;
    let all: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let grand = mean(&all);
    let k = groups.len() as f64;
    let n = all.len() as f64;
    let mut between = 0.0;
    let mut within = 0.0;
    for g in groups {
        let m = mean(g);
        between += g.len() as f64 * (m - grand) * (m - grand);
        within += sum_sq_dev(g, m);
    }
    let (df1, df2) = (k - 1.0, n - k);
    if within == 0.0 {
        return Err(AnalyticsError::Degenerate("within-group variance is zero".into()));
    }
    let f = (between / df1) / (within / df2);
    Ok(TestResult {
        design: Design::Oneway,
        statistic: f,
        df1,
        df2: Some(df2),
        p: f_p_value(f, df1, df2),
    })
}

/// Repeated-measures ANOVA; `conditions[j][i]` is subject `i` under condition `j`.
pub fn repeated_anova(conditions: &[&[f64]]) -> Result<TestResult, AnalyticsError> {
    if conditions.len() < 2 {
        return Err(AnalyticsError::Insufficient("ANOVA needs at least two conditions".into()));
    }
    check_groups(conditions, 2)?;
    let n = conditions[0].len();
    if conditions.iter().any(|c| c.len() != n) {
        return Err(AnalyticsError::Insufficient("every condition needs the same subjects".into()));
    }
    let k = conditions.len();
    let all: Vec<f64> = conditions.iter().flat_map(|g| g.iter().copied()).collect();
    let grand = mean(&all);
    let total = sum_sq_dev(&all, grand);
    let ss_cond: f64 = conditions
        .iter()
        .map(|c| {
            let m = mean(c);
            n as f64 * (m - grand) * (m - grand)
        })
        .sum();
    let ss_subj: f64 = (0..n)
        .map(|i| {
            let m = conditions.iter().map(|c| c[i]).sum::<f64>() / k as f64;
            k as f64 * (m - grand) * (m - grand)
        })
        .sum();
    let ss_err = total - ss_cond - ss_subj;
    let df1 = (k - 1) as f64;
    let df2 = ((k - 1) * (n - 1)) as f64;
    if ss_err <= 1e-12 * total.max(f64::MIN_POSITIVE) {
        return Err(AnalyticsError::Degenerate("residual variance is zero".into()));
    }
    let f = (ss_cond / df1) / (ss_err / df2);
    Ok(TestResult {
        design: Design::Repeated,
        statistic: f,
        df1,
        df2: Some(df2),
        p: f_p_value(f, df1, df2),
    })
}
