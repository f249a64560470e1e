use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datasets::{sinelines_split, DatasetKind};
use crate::models::{representation_spec, GenerativeModel, RepresentationSpec};

const T0: i64 = 1_700_000_000_000;

fn setup() -> (GenerativeModel, RepresentationSpec) {
    let split = sinelines_split(400, 2);
    let gt = GenerativeModel::ground_truth(DatasetKind::Sinelines).unwrap();
    let spec = representation_spec(&gt, &split.heldout).unwrap();
    (gt, spec)
}

fn header(model: &GenerativeModel, spec: &RepresentationSpec) -> LogHeader {
    let p = TaskParams::for_dataset(model.dataset);
    LogHeader {
        session_id: "s1".into(),
        model_id: model.id.clone(),
        task: TaskKind::Reconstruction,
        dataset: model.dataset,
        epsilon: p.epsilon,
        t_threshold: p.t_threshold,
        n_q: p.n_q,
        seed: 0,
        source: "test".into(),
        dims: spec.dims.clone(),
        slider_steps: 100,
        practice: false,
    }
}

#[test]
fn setting_target_solves_and_logs() {
    let (gt, spec) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = new_question(&gt, &spec, &TaskParams::for_dataset(gt.dataset), 0, &mut rng).unwrap();
    assert_eq!(q.epsilon, 0.1);
    let target = q.z_target.clone();
    let mut engine = Engine::new(&gt, header(&gt, &spec)).unwrap();
    engine.begin_question(q, T0).unwrap();
    let mut last = None;
    for (dim, v) in target.iter().enumerate() {
        last = Some(engine.apply(Action::SetValue { dim, value: *v }, T0 + 500 * (dim as i64 + 1)));
        if engine.has_open_question() {
            assert!(!last.as_ref().unwrap().as_ref().unwrap().solved);
        } else {
            break;
        }
    }
    let r = last.unwrap().unwrap();
    assert!(r.solved && r.d <= 0.1);
    // Further actions belong to no question.
    assert!(matches!(
        engine.apply(Action::SetValue { dim: 0, value: target[0] }, T0 + 9000),
        Err(TaskError::State(_))
    ));
    let (log, outcomes) = engine.finish();
    assert_eq!(log.events.last().unwrap().kind, EventKind::Solve);
    assert!(outcomes[0].solved && !outcomes[0].skipped);
}

#[test]
fn skip_threshold_and_out_of_domain_are_rejected() {
    let (gt, spec) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = new_question(&gt, &spec, &TaskParams::for_dataset(gt.dataset), 0, &mut rng).unwrap();
    let mut engine = Engine::new(&gt, header(&gt, &spec)).unwrap();
    engine.begin_question(q, T0).unwrap();
    // Stay active with heartbeats every second.
    for s in 1..=29 {
        engine.apply(Action::Heartbeat, T0 + 1000 * s).unwrap();
    }
    assert!(matches!(engine.apply(Action::Skip, T0 + 29_900), Err(TaskError::Rejected(_))));
    assert!(matches!(
        engine.apply(Action::SetValue { dim: 0, value: 7.0 }, T0 + 29_950),
        Err(TaskError::Rejected(_))
    ));
    let r = engine.apply(Action::Skip, T0 + 30_000).unwrap();
    assert!(r.closed && !r.solved);
    let (log, outcomes) = engine.finish();
    assert!(outcomes[0].skipped);
    assert_eq!(outcomes[0].active_ms, 30_000);
    assert_eq!(log.events.iter().filter(|e| e.kind == EventKind::Reject).count(), 2);
    replay(&log, &gt).unwrap();
}

#[test]
fn inactivity_inserts_pause_and_excludes_gap() {
    let (gt, spec) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = new_question(&gt, &spec, &TaskParams::for_dataset(gt.dataset), 0, &mut rng).unwrap();
    let mut engine = Engine::new(&gt, header(&gt, &spec)).unwrap();
    engine.begin_question(q, T0).unwrap();
    engine.apply(Action::Heartbeat, T0 + 1000).unwrap();
    let r = engine.apply(Action::Heartbeat, T0 + 11_000).unwrap();
    assert_eq!(r.active_ms, 4000);
    let kinds: Vec<EventKind> = engine.log().events.iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        vec![
            EventKind::Question,
            EventKind::Snapshot,
            EventKind::Heartbeat,
            EventKind::Pause,
            EventKind::Resume,
            EventKind::Heartbeat
        ]
    );
    assert_eq!(engine.log().events[3].t_wall, T0 + 4000);
}

#[test]
fn snapshots_follow_direction_and_cadence() {
    let (gt, spec) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = new_question(&gt, &spec, &TaskParams::for_dataset(gt.dataset), 0, &mut rng).unwrap();
    let (lo, hi) = match spec.dims[1] {
        crate::models::DimDomain::Continuous { lo, hi, .. } => (lo, hi),
        _ => unreachable!(),
    };
    let mut engine = Engine::new(&gt, header(&gt, &spec)).unwrap();
    engine.begin_question(q, T0).unwrap();
    let snaps = |e: &Engine<&GenerativeModel>| e.log().events.iter().filter(|e| e.kind == EventKind::Snapshot).count();
    let step = (hi - lo) / 100.0;
    let mut v = lo;
    engine.apply(Action::SetValue { dim: 1, value: v }, T0 + 5).unwrap();
    v += step;
    engine.apply(Action::SetValue { dim: 1, value: v }, T0 + 10).unwrap();
    let base = snaps(&engine);
    // Ten moves 20 ms apart in one direction: one snapshot per 100 ms.
    for k in 1..=10 {
        v += step;
        if engine.apply(Action::SetValue { dim: 1, value: v }, T0 + 10 + 20 * k).unwrap().closed {
            return;
        }
    }
    assert_eq!(snaps(&engine) - base, 2);
    v -= step;
    engine.apply(Action::SetValue { dim: 1, value: v }, T0 + 215).ok();
    assert_eq!(snaps(&engine) - base, 3);
}

#[test]
fn replay_round_trip_and_tampering() {
    let (gt, spec) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = TaskParams::for_dataset(gt.dataset);
    let mut engine = Engine::new(&gt, header(&gt, &spec)).unwrap();
    let mut t = T0;
    for qi in 0..3 {
        let q = new_question(&gt, &spec, &params, qi, &mut rng).unwrap();
        let target = q.z_target.clone();
        engine.begin_question(q, t).unwrap();
        for (dim, v) in target.iter().enumerate() {
            t += 700;
            let mid = (engine.current_z().unwrap()[dim] + v) / 2.0;
            engine.apply(Action::SetValue { dim, value: mid }, t).unwrap();
            if !engine.has_open_question() {
                break;
            }
            t += 4500;
            if engine.apply(Action::SetValue { dim, value: *v }, t).unwrap().closed {
                break;
            }
        }
        t += 2000;
    }
    engine.record(EventKind::Survey, t, serde_json::json!({"seq": 3})).unwrap();
    let (log, outcomes) = engine.finish();
    let text = log.to_jsonl();
    let parsed = EventLog::from_jsonl(&text).unwrap();
    let r = replay(&parsed, &gt).unwrap();
    assert_eq!(r.outcomes, outcomes);
    assert_eq!(r.log.to_jsonl(), text);

    let mut swapped = log.clone();
    swapped.events.swap(3, 4);
    assert!(matches!(replay(&swapped, &gt), Err(TaskError::Validation { .. })));

    let mut orphan = log.clone();
    let mut stray = orphan.events[2].clone();
    stray.kind = EventKind::SliderMove;
    stray.dim = Some(0);
    stray.value = Some(0.0);
    stray.seq = 0;
    stray.t_wall = T0 - 5;
    orphan.events.insert(0, stray);
    for (i, e) in orphan.events.iter_mut().enumerate() {
        e.seq = i as u64;
    }
    match replay(&orphan, &gt) {
        Err(TaskError::Validation { index, .. }) => assert_eq!(index, 0),
        other => panic!("{other:?}"),
    }

    let mut forged = log.clone();
    let i = forged.events.iter().position(|e| e.kind == EventKind::SliderMove).unwrap();
    forged.events[i].d = Some(forged.events[i].d.unwrap() + 0.01);
    assert!(replay(&forged, &gt).is_err());
}

#[test]
fn empty_log_replays_to_nothing() {
    let (gt, spec) = setup();
    let log = EventLog::new(header(&gt, &spec));
    let r = replay(&EventLog::from_jsonl(&log.to_jsonl()).unwrap(), &gt).unwrap();
    assert!(r.outcomes.is_empty());
}

#[test]
fn question_draws_are_seeded_and_rarely_presolved() {
    let (gt, spec) = setup();
    let params = TaskParams::for_dataset(gt.dataset);
    let mut a = ChaCha8Rng::seed_from_u64(9);
    let mut b = ChaCha8Rng::seed_from_u64(9);
    for i in 0..5 {
        let qa = new_question(&gt, &spec, &params, i, &mut a).unwrap();
        let qb = new_question(&gt, &spec, &params, i, &mut b).unwrap();
        assert_eq!(qa, qb);
        assert_ne!(qa.z_start, qa.z_target);
    }
    // Raw iid pairs (before resampling) are seldom within ε already.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut close = 0;
    for _ in 0..1000 {
        let x = gt.decode(&spec.sample(&mut rng).unwrap()).unwrap();
        let y = gt.decode(&spec.sample(&mut rng).unwrap()).unwrap();
        if distance(DatasetKind::Sinelines, &x, &y).unwrap() <= params.epsilon {
            close += 1;
        }
    }
    assert!(close < 50, "{close} of 1000 start pre-solved");
}
