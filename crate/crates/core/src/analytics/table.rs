//! Per-condition summaries and pairwise tests over session metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::stats::{self, bonferroni_threshold, TestResult};
use super::{AnalyticsError, SessionMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub condition: String,
    pub participant: String,
    pub metrics: SessionMetrics,
}

/// Whether each participant saw one condition or all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyDesign {
    Between,
    Within,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub design: StudyDesign,
    pub alpha: f64,
    /// Number of comparisons for the Bonferroni correction; defaults to the
    /// number of pairwise tests in the table.
    #[serde(default)]
    pub comparisons: Option<usize>,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            design: StudyDesign::Between,
            alpha: 0.05,
            comparisons: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub sd: Option<f64>,
}

impl MetricSummary {
    fn of(v: &[f64]) -> Self {
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self { n, mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub sessions: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub metric: String,
    /// Condition pair, or `None` for the omnibus ANOVA.
    pub pair: Option<(String, String)>,
    pub n: Vec<usize>,
    pub result: Option<TestResult>,
    pub significant: bool,
    /// Why no result could be computed.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub design: StudyDesign,
    pub alpha: f64,
    pub comparisons: usize,
    pub threshold: f64,
    /// Active time excludes pauses; response time includes skipped questions.
    pub notes: Vec<String>,
    pub conditions: Vec<ConditionSummary>,
    pub omnibus: Vec<PairwiseTest>,
    pub pairwise: Vec<PairwiseTest>,
    pub rows: Vec<StudyRow>,
}

const METRIC_ORDER: [&str; 14] = [
    "completion_rate",
    "correctness",
    "response_time",
    "slide_distance",
    "error_auc",
    "error_auc_k",
    "seq",
    "tlx_mental_demand",
    "tlx_performance",
    "tlx_effort",
    "tlx_frustration",
    "likert_understanding",
    "likert_confident",
    "likert_sense",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl StudyTable {
    pub fn build(rows: &[StudyRow], cfg: TableConfig) -> Result<Self, AnalyticsError> {
        if rows.is_empty() {
            return Err(AnalyticsError::Insufficient("no sessions to tabulate".into()));
        }
        let mut rows = rows.to_vec();
        rows.sort_by(|a, b| {
            (&a.condition, &a.participant, &a.metrics.session_id).cmp(&(&b.condition, &b.participant, &b.metrics.session_id))
        });
        let conditions: Vec<String> = rows.iter().map(|r| r.condition.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        // metric -> condition -> participant -> values
        let mut data: BTreeMap<&str, BTreeMap<&str, BTreeMap<&str, Vec<f64>>>> = BTreeMap::new();
        for r in &rows {
            for (name, v) in r.metrics.values() {
                data.entry(name)
                    .or_default()
                    .entry(r.condition.as_str())
                    .or_default()
                    .entry(r.participant.as_str())
                    .or_default()
                    .push(v);
            }
        }
        let metrics: Vec<&str> = METRIC_ORDER.iter().copied().filter(|m| data.contains_key(m)).collect();

        let summaries = conditions
            .iter()
            .map(|c| {
                let mut out = BTreeMap::new();
                for m in &metrics {
                    if let Some(per) = data[m].get(c.as_str()) {
                        let v: Vec<f64> = per.values().flatten().copied().collect();
                        out.insert(m.to_string(), MetricSummary::of(&v));
                    }
                }
                ConditionSummary {
                    condition: c.clone(),
                    sessions: rows.iter().filter(|r| &r.condition == c).count(),
                    metrics: out,
                }
            })
            .collect();

        let mut omnibus = Vec::new();
        let mut pairwise = Vec::new();
        for m in &metrics {
            let by_cond = &data[m];
            let groups: Vec<(&str, &BTreeMap<&str, Vec<f64>>)> =
                conditions.iter().filter_map(|c| by_cond.get(c.as_str()).map(|g| (c.as_str(), g))).collect();
            let test = |sel: &[(&str, &BTreeMap<&str, Vec<f64>>)]| -> (Vec<usize>, Result<TestResult, AnalyticsError>) {
                match cfg.design {
                    StudyDesign::Between => {
                        let vals: Vec<Vec<f64>> = sel.iter().map(|(_, g)| g.values().flatten().copied().collect()).collect();
                        let refs: Vec<&[f64]> = vals.iter().map(Vec::as_slice).collect();
                        let n = vals.iter().map(Vec::len).collect();
                        let r = if refs.len() == 2 {
                            stats::independent_t(refs[0], refs[1])
                        } else {
                            stats::oneway_anova(&refs)
                        };
                        (n, r)
                    }
                    StudyDesign::Within => {
                        let common: Vec<&str> = sel[0]
                            .1
                            .keys()
                            .copied()
                            .filter(|p| sel.iter().all(|(_, g)| g.contains_key(p)))
                            .collect();
                        let vals: Vec<Vec<f64>> = sel
                            .iter()
                            .map(|(_, g)| common.iter().map(|p| super::mean(&g[p])).collect())
                            .collect();
                        let refs: Vec<&[f64]> = vals.iter().map(Vec::as_slice).collect();
                        let n = vec![common.len(); sel.len()];
                        let r = if refs.len() == 2 {
                            stats::paired_t(refs[0], refs[1])
                        } else {
                            stats::repeated_anova(&refs)
                        };
                        (n, r)
                    }
                }
            };
            if groups.len() >= 3 {
                let (n, r) = test(&groups);
                omnibus.push(PairwiseTest {
                    metric: m.to_string(),
                    pair: None,
                    n,
                    significant: false,
                    note: r.as_ref().err().map(ToString::to_string),
                    result: r.ok(),
                });
            }
            for i in 0..groups.len() {
                for j in i + 1..groups.len() {
                    let (n, r) = test(&[groups[i], groups[j]]);
                    pairwise.push(PairwiseTest {
                        metric: m.to_string(),
                        pair: Some((groups[i].0.to_string(), groups[j].0.to_string())),
                        n,
                        significant: false,
                        note: r.as_ref().err().map(ToString::to_string),
                        result: r.ok(),
                    });
                }
            }
        }
        let comparisons = cfg.comparisons.unwrap_or(pairwise.len()).max(1);
        let threshold = bonferroni_threshold(cfg.alpha, comparisons);
        for t in pairwise.iter_mut() {
            t.significant = t.result.as_ref().is_some_and(|r| r.significant(threshold));
        }
        for t in omnibus.iter_mut() {
            t.significant = t.result.as_ref().is_some_and(|r| r.significant(cfg.alpha));
        }
        Ok(Self {
            design: cfg.design,
            alpha: cfg.alpha,
            comparisons,
            threshold,
            notes: vec![
                "time is active time with pauses excised".into(),
                "response time includes skipped questions".into(),
            ],
            conditions: summaries,
            omnibus,
            pairwise,
            rows,
        })
    }

    pub fn to_json(&self) -> Result<String, AnalyticsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Summary rows followed by test rows in one CSV.
    pub fn to_csv(&self) -> Result<String, AnalyticsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "section", "metric", "condition", "other", "n", "mean", "sd", "test", "statistic", "df1", "df2", "p",
            "significant", "note",
        ])?;
        for c in &self.conditions {
            for (m, s) in &c.metrics {
                w.write_record([
                    "summary",
                    m,
                    &c.condition,
                    "",
                    &s.n.to_string(),
                    &s.mean.to_string(),
                    &fmt_opt(s.sd),
                    "",
                    "",
                    "",
                    "",
                    "",
                    "",
                    "",
                ])?;
            }
        }
        for (section, tests) in [("omnibus", &self.omnibus), ("pairwise", &self.pairwise)] {
            for t in tests {
                let (a, b) = t.pair.clone().unwrap_or_default();
                let n: Vec<String> = t.n.iter().map(ToString::to_string).collect();
                let r = t.result.as_ref();
                w.write_record([
                    section,
                    &t.metric,
                    &a,
                    &b,
                    &n.join("/"),
                    "",
                    "",
                    &r.map(|r| format!("{:?}", r.design).to_lowercase()).unwrap_or_default(),
                    &fmt_opt(r.map(|r| r.statistic)),
                    &fmt_opt(r.map(|r| r.df1)),
                    &fmt_opt(r.and_then(|r| r.df2)),
                    &fmt_opt(r.map(|r| r.p)),
                    &t.significant.to_string(),
                    t.note.as_deref().unwrap_or(""),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| AnalyticsError::Insufficient(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
    }

    /// One line per (condition, participant, metric) value, for plotting.
    pub fn to_long_csv(&self) -> Result<String, AnalyticsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["condition", "participant", "metric", "value"])?;
        for r in &self.rows {
            for (m, v) in r.metrics.values() {
                w.write_record([r.condition.as_str(), r.participant.as_str(), m, &v.to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| AnalyticsError::Insufficient(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
    }
}
