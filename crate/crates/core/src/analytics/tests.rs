use serde_json::json;

use super::*;
use crate::datasets::{DatasetKind, Instance};
use crate::models::DimDomain;
use crate::task::{Action, Engine, Question};

const T0: i64 = 1_700_000_000_000;

/// Four pixels at |z|, the rest zero: squared error 4z² against the blank
/// target, Bray-Curtis distance 1 until z = 0.
struct Ramp;

impl InstanceDecoder for Ramp {
    fn decode(&self, z: &[f64]) -> Result<Instance, TaskError> {
        let mut data = vec![0f32; DatasetKind::Circles.instance_len()];
        for v in &mut data[..4] {
            *v = z[0].abs() as f32;
        }
        Ok(Instance::new(DatasetKind::Circles, data).unwrap())
    }
    fn dataset(&self) -> DatasetKind {
        DatasetKind::Circles
    }
    fn model_id(&self) -> &str {
        "ramp"
    }
}

fn header(n_q: usize) -> LogHeader {
    LogHeader {
        session_id: "s".into(),
        model_id: "ramp".into(),
        task: TaskKind::Reconstruction,
        dataset: DatasetKind::Circles,
        epsilon: 1e-6,
        t_threshold: 30.0,
        n_q,
        seed: 0,
        source: "test".into(),
        dims: vec![DimDomain::Continuous {
            lo: -2.0,
            hi: 2.0,
            inactive: false,
        }],
        slider_steps: 100,
        practice: false,
    }
}

fn ramp_question(engine: &mut Engine<Ramp>, index: usize, t: i64) {
    let x_target = Ramp.decode(&[0.0]).unwrap();
    engine
        .begin_question(
            Question {
                index,
                z_start: vec![1.0],
                z_target: vec![0.0],
                x_target,
                epsilon: 1e-6,
                t_threshold: 30.0,
            },
            t,
        )
        .unwrap();
}

#[test]
fn error_auc_rectangle_trapezoid_and_instant() {
    // Constant error 4 for 10 active seconds.
    let mut e = Engine::new(Ramp, header(1)).unwrap();
    ramp_question(&mut e, 0, T0);
    for s in 1..=10 {
        e.apply(Action::Heartbeat, T0 + 1000 * s).unwrap();
    }
    let (_, out) = e.finish();
    assert!((out[0].error_auc - 40.0).abs() < 1e-4, "{}", out[0].error_auc);

    // Error falling linearly from 4 to 0 over 10 s.
    let mut e = Engine::new(Ramp, header(1)).unwrap();
    ramp_question(&mut e, 0, T0);
    for k in 1..=10 {
        let z = (1.0 - k as f64 / 10.0).sqrt();
        e.apply(Action::SetValue { dim: 0, value: z }, T0 + 1000 * k).unwrap();
    }
    let (_, out) = e.finish();
    assert!(out[0].solved);
    assert!((out[0].error_auc - 20.0).abs() < 1e-4, "{}", out[0].error_auc);

    // Solved at the first instant.
    let mut e = Engine::new(Ramp, header(1)).unwrap();
    ramp_question(&mut e, 0, T0);
    e.apply(Action::SetValue { dim: 0, value: 0.0 }, T0).unwrap();
    let (_, out) = e.finish();
    assert!(out[0].solved);
    assert_eq!(out[0].error_auc, 0.0);
}

#[test]
fn pauses_never_increase_error_auc() {
    let run = |gap: i64| {
        let mut e = Engine::new(Ramp, header(1)).unwrap();
        ramp_question(&mut e, 0, T0);
        e.apply(Action::Heartbeat, T0 + 2000).unwrap();
        e.apply(Action::Heartbeat, T0 + 2000 + gap).unwrap();
        e.finish().1[0].error_auc
    };
    // Only 3 s of the 20 s gap count.
    assert!((run(20_000) - 4.0 * 5.0).abs() < 1e-4);
    assert!(run(20_000) < 4.0 * 22.0);
}

#[test]
fn slide_distance_examples() {
    let mut e = Engine::new(Ramp, header(1)).unwrap();
    ramp_question(&mut e, 0, T0);
    // 1 → -1 → 1 on a width-4 slider: two half widths.
    e.apply(Action::SetValue { dim: 0, value: -1.0 }, T0 + 100).unwrap();
    e.apply(Action::SetValue { dim: 0, value: 1.0 }, T0 + 200).unwrap();
    let (log, out) = e.finish();
    let s = SessionData::from_parts(&log, out).unwrap();
    assert!((slide_distance(&s).unwrap() - 1.0).abs() < 1e-12);
}

fn outcome(index: usize, solved: bool, secs: i64) -> QuestionOutcome {
    QuestionOutcome {
        index,
        solved,
        skipped: !solved,
        active_ms: secs * 1000,
        slide_distance: 0.5,
        error_auc: 10.0,
        start_d: 0.5,
        final_d: if solved { 0.0 } else { 0.4 },
        final_z: vec![0.0],
        actions: 3,
    }
}

fn session(solved: &[bool]) -> SessionData {
    SessionData {
        header: header(solved.len()),
        outcomes: solved.iter().enumerate().map(|(i, &s)| outcome(i, s, if s { 10 } else { 30 })).collect(),
        answers: vec![],
        survey: Survey::default(),
    }
}

#[test]
fn completion_and_response_time() {
    let s = session(&[true, false, true, true, false]);
    assert!((completion_rate(&s).unwrap() - 0.6).abs() < 1e-15);
    assert_eq!(completion_rate(&session(&[false; 5])).unwrap(), 0.0);
    let m = SessionMetrics::compute(&s).unwrap();
    // (3·10 + 2·30) / 5
    assert!((m.response_time - 18.0).abs() < 1e-12);
    assert_eq!(m.error_auc, Some(50.0));
    assert!(m.values().contains(&("error_auc_k", 0.05)));
}

#[test]
fn learning_delta_windows() {
    assert_eq!(learning_window(7).unwrap(), 3);
    assert_eq!(learning_window(5).unwrap(), 2);
    assert!(matches!(learning_window(2), Err(AnalyticsError::Undefined(_))));
    let s = session(&[true, false, false, false, true, true, true]);
    let d = learning_delta(&[s], QuestionMetric::Completion).unwrap();
    assert!((d - 2.0 / 3.0).abs() < 1e-15);
    let flat = session(&[true, false, true, false, true, false, true]);
    let same = session(&[false, true, false, true, false, true, false]);
    assert_eq!(learning_delta(&[same.clone()], QuestionMetric::SlideDistance).unwrap(), 0.0);
    // Pooling two sessions whose windows mirror each other.
    assert_eq!(learning_delta(&[flat, same], QuestionMetric::Completion).unwrap(), 0.0);
}

#[test]
fn survey_parsing_and_validation() {
    let mut e = Engine::new(Ramp, header(1)).unwrap();
    ramp_question(&mut e, 0, T0);
    e.apply(Action::SetValue { dim: 0, value: 0.0 }, T0 + 500).unwrap();
    e.record(
        EventKind::Survey,
        T0 + 900,
        json!({"seq": 5, "nasa_tlx": {"mental_demand": 40, "performance": 20, "effort": 55, "frustration": 10},
               "likert_understanding": 4, "labels": ["slope", "offset"]}),
    )
    .unwrap();
    let (log, out) = e.finish();
    let s = SessionData::from_log(&log, Ramp).unwrap();
    assert_eq!(s.outcomes, out);
    let m = SessionMetrics::compute(&s).unwrap();
    assert_eq!(m.seq, Some(5.0));
    assert_eq!(m.likert_understanding, Some(4.0));
    assert_eq!(m.nasa_tlx.unwrap().effort, 55.0);
    assert!(Survey::from_payload(&json!({"seq": 8})).is_err());
    assert!(Survey::from_payload(&json!({"seq": 2.5})).is_err());
    assert!(Survey::from_payload(&json!({"likert_understanding": 0})).is_err());
}

#[test]
fn retention_filter() {
    let none = session(&[false; 7]);
    let one = session(&[true, false, false, false, false, false, false]);
    let r = Retention {
        min_solved: Some(1),
        include_practice: false,
    };
    assert!(!r.keeps(&none) && r.keeps(&one));
    let mut practice = one.clone();
    practice.header.practice = true;
    assert!(!r.keeps(&practice));
    assert!(Retention::default().keeps(&none));
}

fn row(cond: &str, who: &str, completion: f64, time: f64) -> StudyRow {
    StudyRow {
        condition: cond.into(),
        participant: who.into(),
        metrics: SessionMetrics {
            session_id: format!("{cond}-{who}"),
            model_id: cond.into(),
            task: TaskKind::Reconstruction,
            questions: 5,
            completion_rate: Some(completion),
            response_time: time,
            slide_distance: Some(1.0),
            error_auc: Some(time * 100.0),
            correctness: None,
            likert_confident: None,
            likert_sense: None,
            seq: None,
            nasa_tlx: None,
            likert_understanding: None,
        },
    }
}

#[test]
fn study_table_between_design() {
    let rows = vec![
        row("gt", "p1", 1.0, 10.0),
        row("gt", "p2", 0.8, 12.0),
        row("gt", "p3", 0.6, 15.0),
        row("ae", "p4", 0.2, 28.0),
        row("ae", "p5", 0.4, 25.0),
        row("ae", "p6", 0.0, 30.0),
        row("vae", "p7", 0.4, 20.0),
        row("vae", "p8", 0.6, 22.0),
        row("vae", "p9", 0.2, 26.0),
    ];
    let t = StudyTable::build(&rows, TableConfig::default()).unwrap();
    assert_eq!(t.conditions.iter().map(|c| c.condition.as_str()).collect::<Vec<_>>(), ["ae", "gt", "vae"]);
    let gt = &t.conditions[1].metrics["completion_rate"];
    assert_eq!(gt.n, 3);
    assert!((gt.mean - 0.8).abs() < 1e-12 && (gt.sd.unwrap() - 0.2).abs() < 1e-12);
    // slide distance is constant in every group, so its tests are degenerate.
    assert!(t.pairwise.iter().filter(|p| p.metric == "slide_distance").all(|p| p.result.is_none() && p.note.is_some()));
    assert_eq!(t.comparisons, t.pairwise.len());
    let ae_gt = t
        .pairwise
        .iter()
        .find(|p| p.metric == "completion_rate" && p.pair == Some(("ae".into(), "gt".into())))
        .unwrap();
    assert!(ae_gt.result.as_ref().unwrap().statistic < 0.0);
    assert_eq!(t.omnibus.iter().filter(|o| o.result.is_some()).count(), 4);
    let again = StudyTable::build(&rows.iter().rev().cloned().collect::<Vec<_>>(), TableConfig::default()).unwrap();
    assert_eq!(t.to_csv().unwrap(), again.to_csv().unwrap());
    assert_eq!(t.to_json().unwrap(), again.to_json().unwrap());
    let long = t.to_long_csv().unwrap();
    assert!(long.starts_with("condition,participant,metric,value\n"));
    assert_eq!(long.lines().count(), 1 + 9 * 5);
}

#[test]
fn study_table_within_design_pairs_participants() {
    let mut rows = Vec::new();
    for (i, (a, b)) in [(1.0, 0.8), (0.6, 0.5), (0.8, 0.4), (0.4, 0.3)].iter().enumerate() {
        let who = format!("p{i}");
        rows.push(row("gt", &who, *a, 10.0 + i as f64));
        rows.push(row("ae", &who, *b, 20.0 + 2.0 * i as f64));
    }
    let cfg = TableConfig {
        design: StudyDesign::Within,
        ..TableConfig::default()
    };
    let t = StudyTable::build(&rows, cfg).unwrap();
    let p = t.pairwise.iter().find(|p| p.metric == "completion_rate").unwrap();
    let r = p.result.as_ref().unwrap();
    assert_eq!(r.design, Design::Paired);
    let direct = paired_t(&[0.8, 0.5, 0.4, 0.3], &[1.0, 0.6, 0.8, 0.4]).unwrap();
    assert!((r.statistic - direct.statistic).abs() < 1e-12);
    assert_eq!(p.n, vec![4, 4]);
}
