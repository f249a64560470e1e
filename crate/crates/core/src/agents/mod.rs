//! Simulated participants for the reconstruction task.
//!
//! The oracle is handed the target representation and sets every dimension
//! to it directly. The coordinate-ascent agent only sees the distance and
//! line-searches one dimension at a time. The random agent moves sliders
//! blindly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{AnalyticsError, SessionData, SessionMetrics, StudyDesign, StudyRow, StudyTable, TableConfig};
use crate::models::{DimDomain, RepresentationSpec};
use crate::task::{
    new_question, Action, Engine, EventLog, InstanceDecoder, LogHeader, QuestionOutcome, TaskError, TaskKind,
    TaskParams,
};

/// Start of simulated time; sessions are laid out on a fixed clock so logs
/// are reproducible.
pub const AGENT_EPOCH_MS: i64 = 1_700_000_000_000;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Oracle,
    CoordinateAscent,
    Random,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Oracle => "oracle",
            AgentKind::CoordinateAscent => "coordinate_ascent",
            AgentKind::Random => "random",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "oracle" => Ok(AgentKind::Oracle),
            "coordinate_ascent" | "ascent" => Ok(AgentKind::CoordinateAscent),
            "random" => Ok(AgentKind::Random),
            other => Err(format!("unknown agent {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentBudget {
    /// Value-changing actions allowed per question.
    pub max_actions: usize,
    pub seconds_per_action: f64,
}

impl Default for AgentBudget {
    fn default() -> Self {
        Self {
            max_actions: 60,
            seconds_per_action: 0.5,
        }
    }
}

impl AgentBudget {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.max_actions == 0 || !(self.seconds_per_action > 0.0) || self.seconds_per_action * 1000.0 > 3000.0 {
            return Err(TaskError::Config(format!(
                "budget needs at least one action and 0 < seconds per action <= 3, got {self:?}"
            )));
        }
        Ok(())
    }

    fn step_ms(&self) -> i64 {
        ((self.seconds_per_action * 1000.0).round() as i64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicy {
    pub kind: AgentKind,
    /// Line-search probes per dimension per pass.
    pub probes: usize,
    pub seed: u64,
}

impl AgentPolicy {
    pub fn new(kind: AgentKind, seed: u64) -> Self {
        Self { kind, probes: 8, seed }
    }
}

/// Wraps the engine with the agent's clock and action budget.
struct Runner<'a, D: InstanceDecoder> {
    engine: Engine<&'a D>,
    t: i64,
    step: i64,
    actions: usize,
    max_actions: usize,
    d: f64,
    closed: bool,
}

impl<D: InstanceDecoder> Runner<'_, D> {
    fn exhausted(&self) -> bool {
        self.closed || self.actions >= self.max_actions
    }

    fn act(&mut self, action: Action) -> Result<f64, TaskError> {
        self.t += self.step;
        self.actions += 1;
        let r = self.engine.apply(action, self.t)?;
        self.d = r.d;
        self.closed = r.closed;
        Ok(r.d)
    }

    fn set(&mut self, dim: usize, domain: &DimDomain, value: f64) -> Result<f64, TaskError> {
        match domain {
            DimDomain::Continuous { .. } => self.act(Action::SetValue { dim, value }),
            DimDomain::Discrete { support } => {
                let choice = support.iter().position(|&s| s == value).expect("value from the support");
                self.act(Action::Select { dim, choice })
            }
        }
    }

    /// Waits with heartbeats until skipping is allowed, then skips.
    fn give_up(&mut self, threshold_ms: i64) -> Result<(), TaskError> {
        while self.engine.active_ms().is_some_and(|a| a < threshold_ms) {
            let remaining = threshold_ms - self.engine.active_ms().unwrap_or(0);
            self.t += remaining.min(1000);
            self.engine.apply(Action::Heartbeat, self.t)?;
        }
        if self.engine.has_open_question() {
            self.t += 1;
            self.engine.apply(Action::Skip, self.t)?;
        }
        Ok(())
    }
}

fn oracle<D: InstanceDecoder>(r: &mut Runner<D>, spec: &RepresentationSpec) -> Result<(), TaskError> {
    let target = r.engine.target_z().expect("open question").to_vec();
    for (dim, domain) in spec.dims.iter().enumerate() {
        if r.exhausted() {
            break;
        }
        if r.engine.current_z().expect("open question")[dim] != target[dim] {
            r.set(dim, domain, target[dim])?;
        }
    }
    Ok(())
}

fn coordinate_ascent<D: InstanceDecoder>(
    r: &mut Runner<D>,
    spec: &RepresentationSpec,
    probes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), TaskError> {
    let inactive = spec.inactive_dims();
    let mut dims: Vec<usize> = (0..spec.len()).filter(|d| !inactive.contains(d)).collect();
    while !r.exhausted() {
        dims.shuffle(rng);
        for &dim in &dims {
            if r.exhausted() {
                break;
            }
            let mut best = (r.d, r.engine.current_z().expect("open question")[dim]);
            let mut last = best.1;
            match &spec.dims[dim] {
                DimDomain::Discrete { support } => {
                    for &v in support.iter().take(probes) {
                        if r.exhausted() {
                            break;
                        }
                        if v == last {
                            continue;
                        }
                        let d = r.set(dim, &spec.dims[dim], v)?;
                        last = v;
                        if d < best.0 {
                            best = (d, v);
                        }
                    }
                }
                DimDomain::Continuous { lo, hi, .. } => {
                    let (mut a, mut b) = (*lo, *hi);
                    let mut c = b - INV_PHI * (b - a);
                    let mut e = a + INV_PHI * (b - a);
                    let probe = |r: &mut Runner<D>, v: f64, best: &mut (f64, f64)| -> Result<Option<f64>, TaskError> {
                        if r.exhausted() {
                            return Ok(None);
                        }
                        let d = r.set(dim, &spec.dims[dim], v)?;
                        if d < best.0 {
                            *best = (d, v);
                        }
                        Ok(Some(d))
                    };
                    let Some(mut fc) = probe(r, c, &mut best)? else { break };
                    let Some(mut fe) = probe(r, e, &mut best)? else { break };
                    last = e;
                    for _ in 2..probes {
                        if fc <= fe {
                            b = e;
                            e = c;
                            fe = fc;
                            c = b - INV_PHI * (b - a);
                            let Some(f) = probe(r, c, &mut best)? else { break };
                            fc = f;
                            last = c;
                        } else {
                            a = c;
                            c = e;
                            fc = fe;
                            e = a + INV_PHI * (b - a);
                            let Some(f) = probe(r, e, &mut best)? else { break };
                            fe = f;
                            last = e;
                        }
                    }
                }
            }
            if !r.exhausted() && last != best.1 {
                r.set(dim, &spec.dims[dim], best.1)?;
            }
        }
    }
    Ok(())
}

fn random_agent<D: InstanceDecoder>(
    r: &mut Runner<D>,
    spec: &RepresentationSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(), TaskError> {
    let inactive = spec.inactive_dims();
    let dims: Vec<usize> = (0..spec.len()).filter(|d| !inactive.contains(d)).collect();
    while !r.exhausted() {
        let dim = dims[rng.random_range(0..dims.len())];
        let v = match &spec.dims[dim] {
            DimDomain::Continuous { lo, hi, .. } => rng.random_range(*lo..=*hi),
            DimDomain::Discrete { support } => support[rng.random_range(0..support.len())],
        };
        r.set(dim, &spec.dims[dim], v)?;
    }
    Ok(())
}

/// One simulated session of `params.n_q` questions. Questions and agent
/// choices are drawn from one generator seeded by `policy.seed`.
pub fn run_agent<D: InstanceDecoder>(
    policy: &AgentPolicy,
    decoder: &D,
    spec: &RepresentationSpec,
    params: &TaskParams,
    budget: &AgentBudget,
    session_id: &str,
) -> Result<(EventLog, Vec<QuestionOutcome>), TaskError> {
    budget.validate()?;
    params.validate()?;
    if policy.probes < 2 {
        return Err(TaskError::Config("line search needs at least two probes".into()));
    }
    if spec.dims.len() - spec.inactive_dims().len() == 0 {
        return Err(TaskError::Config("no active dimension to move".into()));
    }
    let header = LogHeader {
        session_id: session_id.into(),
        model_id: decoder.model_id().into(),
        task: TaskKind::Reconstruction,
        dataset: decoder.dataset(),
        epsilon: params.epsilon,
        t_threshold: params.t_threshold,
        n_q: params.n_q,
        seed: policy.seed,
        source: format!("agent:{}", policy.kind.as_str()),
        dims: spec.dims.clone(),
        slider_steps: 100,
        practice: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut runner = Runner {
        engine: Engine::new(decoder, header)?,
        t: AGENT_EPOCH_MS,
        step: budget.step_ms(),
        actions: 0,
        max_actions: budget.max_actions,
        d: f64::INFINITY,
        closed: false,
    };
    for index in 0..params.n_q {
        let q = new_question(decoder, spec, params, index, &mut rng)?;
        runner.t += 5000;
        runner.d = runner.engine.begin_question(q, runner.t)?;
        runner.actions = 0;
        runner.closed = false;
        match policy.kind {
            AgentKind::Oracle => oracle(&mut runner, spec)?,
            AgentKind::CoordinateAscent => coordinate_ascent(&mut runner, spec, policy.probes, &mut rng)?,
            AgentKind::Random => random_agent(&mut runner, spec, &mut rng)?,
        }
        if runner.engine.has_open_question() {
            runner.give_up(params.threshold_ms())?;
        }
    }
    Ok(runner.engine.finish())
}

/// A model taking part in an agent study, with the slider ranges its
/// sessions use.
pub struct StudyArm<'a, D> {
    pub condition: String,
    pub decoder: &'a D,
    pub spec: &'a RepresentationSpec,
}

pub struct AgentStudy {
    pub table: StudyTable,
    pub logs: Vec<(String, EventLog)>,
}

/// Runs one session per (arm, seed) and tabulates them; the seed plays the
/// participant, so the design is within-subjects.
pub fn agent_study<D: InstanceDecoder>(
    arms: &[StudyArm<D>],
    kind: AgentKind,
    params: &TaskParams,
    budget: &AgentBudget,
    seeds: &[u64],
) -> Result<AgentStudy, AnalyticsError> {
    if let Some(first) = arms.first() {
        if arms.iter().any(|a| a.decoder.dataset() != first.decoder.dataset()) {
            return Err(AnalyticsError::Insufficient("study arms must share a dataset".into()));
        }
    }
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for arm in arms {
        for &seed in seeds {
            let policy = AgentPolicy::new(kind, seed);
            let id = format!("{}-{}-s{seed}", arm.condition, kind.as_str());
            let (log, outcomes) = run_agent(&policy, arm.decoder, arm.spec, params, budget, &id)?;
            let data = SessionData::from_parts(&log, outcomes)?;
            rows.push(StudyRow {
                condition: arm.condition.clone(),
                participant: format!("seed-{seed}"),
                metrics: SessionMetrics::compute(&data)?,
            });
            logs.push((arm.condition.clone(), log));
        }
    }
    let cfg = TableConfig {
        design: StudyDesign::Within,
        ..TableConfig::default()
    };
    Ok(AgentStudy {
        table: StudyTable::build(&rows, cfg)?,
        logs,
    })
}

#[cfg(test)]
mod tests;
