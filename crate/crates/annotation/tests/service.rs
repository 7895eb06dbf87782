use std::collections::{HashMap, HashSet};

use dialogq_annotation::{AnnotationService, QuestionnaireDraft, ServiceError, Store, TaskStatus};
use dialogq_core::dialog::{Dialog, RawUtteranceEvent};
use dialogq_core::questionnaire::{
    Coherence, DqaQuestionnaire, GoalCompletion, GoalCount, GoalFriction, GoalProgression, Sentiment,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dialog(id: usize, turns: usize) -> Dialog {
    let events = (0..turns)
        .map(|k| RawUtteranceEvent {
            user_id: format!("user{id}"),
            timestamp: 1_000 + k as i64 * 10,
            user_text: format!("request {k}"),
            system_text: format!("answer {k}"),
            turn_id: format!("d{id}t{k}"),
            use_case: "shopping".into(),
            dialog_id: None,
        })
        .collect();
    Dialog::from_events(format!("d{id}"), events).unwrap()
}

fn dialogs(n: usize) -> Vec<Dialog> {
    (0..n).map(|i| dialog(i, 1 + i % 3)).collect()
}

fn questionnaire(turns: usize, satisfaction: u8) -> DqaQuestionnaire {
    DqaQuestionnaire {
        turn_ratings: vec![3; turns],
        user_satisfaction: satisfaction,
        goal_count: GoalCount::One,
        goal_progression: GoalProgression::SomeProgress,
        goal_completion: GoalCompletion::SomeCompleted,
        goal_friction: GoalFriction::SomeFriction,
        coherence: Coherence::AllMadeSense,
        sentiment: Sentiment::Neutral,
    }
}

fn service() -> AnnotationService {
    AnnotationService::new(Store::in_memory()).with_clock(|| "2024-01-01T00:00:00.000Z".to_string())
}

fn turns_of(svc: &AnnotationService, dialog_id: &str) -> usize {
    svc.dialog(dialog_id).unwrap().len()
}

#[test]
fn dual_fraction_counts() {
    let svc = service();
    let tasks = svc.create_batch(dialogs(100), 0.2, 5).unwrap();
    assert_eq!(tasks.len(), 120);
    let mut per_dialog: HashMap<&str, usize> = HashMap::new();
    for t in &tasks {
        *per_dialog.entry(&t.dialog_id).or_default() += 1;
    }
    assert_eq!(per_dialog.values().filter(|&&n| n == 2).count(), 20);
    assert_eq!(tasks.iter().filter(|t| t.is_dual_copy).count(), 40);

    let small = service().create_batch(dialogs(10), 0.2, 1).unwrap();
    assert_eq!(small.len(), 12);
    assert_eq!(service().create_batch(dialogs(10), 0.0, 1).unwrap().len(), 10);
    assert!(service().create_batch(Vec::new(), 0.2, 1).unwrap().is_empty());
    assert!(matches!(
        service().create_batch(dialogs(3), 1.5, 1),
        Err(ServiceError::InvalidRequest(_))
    ));
}

#[test]
fn same_seed_same_batch() {
    let a = service().create_batch(dialogs(30), 0.2, 9).unwrap();
    let b = service().create_batch(dialogs(30), 0.2, 9).unwrap();
    let c = service().create_batch(dialogs(30), 0.2, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn claims_are_fifo_and_respect_the_same_annotator_rule() {
    let svc = service();
    assert_eq!(svc.claim_next_task("a").unwrap(), None);
    let tasks = svc.create_batch(dialogs(2), 1.0, 3).unwrap();
    let first = svc.claim_next_task("a").unwrap().unwrap();
    assert_eq!(first.task_id, tasks[0].task_id);
    assert_eq!(first.status, TaskStatus::Claimed);
    // An open claim is handed back rather than a second task.
    assert_eq!(svc.claim_next_task("a").unwrap().unwrap(), first);

    let q = questionnaire(turns_of(&svc, &first.dialog_id), 4);
    svc.submit_annotation(&first.task_id, q.into()).unwrap();
    for _ in 0..3 {
        let Some(t) = svc.claim_next_task("a").unwrap() else { break };
        assert_ne!(t.dialog_id, first.dialog_id, "a claimed both copies");
        let q = questionnaire(turns_of(&svc, &t.dialog_id), 4);
        svc.submit_annotation(&t.task_id, q.into()).unwrap();
    }
    let b = svc.claim_next_task("b").unwrap().unwrap();
    assert_eq!(b.dialog_id, first.dialog_id);
}

#[test]
fn submission_validation() {
    let svc = service();
    svc.create_batch(vec![dialog(1, 3)], 0.0, 1).unwrap();
    assert!(matches!(
        svc.submit_annotation("d1:0", questionnaire(3, 4).into()),
        Err(ServiceError::NotClaimed(_))
    ));
    let t = svc.claim_next_task("a").unwrap().unwrap();

    let short = svc.submit_annotation(&t.task_id, questionnaire(2, 4).into());
    assert!(matches!(short, Err(ServiceError::InvalidQuestionnaire(_))));
    let high = svc.submit_annotation(&t.task_id, questionnaire(3, 6).into());
    assert!(matches!(high, Err(ServiceError::InvalidQuestionnaire(_))));
    let mut draft: QuestionnaireDraft = questionnaire(3, 4).into();
    draft.coherence = None;
    draft.sentiment = None;
    match svc.submit_annotation(&t.task_id, draft) {
        Err(ServiceError::Incomplete(missing)) => assert_eq!(missing, ["coherence", "sentiment"]),
        other => panic!("{other:?}"),
    }
    assert!(svc.export_training_set().unwrap().is_empty());

    let rec = svc.submit_annotation(&t.task_id, questionnaire(3, 4).into()).unwrap();
    assert_eq!(rec.annotator_id, "a");
    assert!(matches!(
        svc.submit_annotation(&t.task_id, questionnaire(3, 4).into()),
        Err(ServiceError::AlreadySubmitted(_))
    ));
    assert!(matches!(
        svc.submit_annotation("nope", questionnaire(3, 4).into()),
        Err(ServiceError::NotFound { .. })
    ));
}

fn annotate_all(svc: &AnnotationService, ratings: &HashMap<(&str, &str), u8>) {
    for annotator in ["a", "b"] {
        while let Some(t) = svc.claim_next_task(annotator).unwrap() {
            let r = ratings.get(&(t.dialog_id.as_str(), annotator)).copied().unwrap_or(5);
            let q = questionnaire(turns_of(svc, &t.dialog_id), r);
            svc.submit_annotation(&t.task_id, q.into()).unwrap();
        }
    }
}

#[test]
fn export_uses_the_minimum_dual_rating() {
    let svc = service();
    assert!(svc.export_training_set().unwrap().is_empty());
    svc.create_batch(vec![dialog(0, 2)], 1.0, 1).unwrap();
    svc.create_batch(vec![dialog(1, 1)], 0.0, 1).unwrap();
    let ratings = HashMap::from([(("d0", "a"), 5), (("d0", "b"), 4), (("d1", "a"), 4)]);
    annotate_all(&svc, &ratings);

    let rows = svc.export_training_set().unwrap();
    assert_eq!(rows.len(), 2);
    let d0 = rows.iter().find(|r| r.dialog.dialog_id == "d0").unwrap();
    assert_eq!((d0.rating, d0.defect), (Some(4), false));
    let d1 = rows.iter().find(|r| r.dialog.dialog_id == "d1").unwrap();
    assert_eq!((d1.rating, d1.defect), (Some(4), false));
}

#[test]
fn agreement_fractions() {
    let svc = service();
    assert!(matches!(svc.agreement_report(), Err(ServiceError::NoDualPairs)));
    svc.create_batch(vec![dialog(0, 1), dialog(1, 1)], 1.0, 2).unwrap();
    let ratings = HashMap::from([(("d0", "a"), 4), (("d0", "b"), 5), (("d1", "a"), 2), (("d1", "b"), 5)]);
    annotate_all(&svc, &ratings);
    let report = svc.agreement_report().unwrap();
    assert_eq!(report.n_pairs, 2);
    assert_eq!(report.overall_within_one, 0.5);
    assert_eq!(report.per_annotator["a"].submitted, 2);
    assert_eq!(report.per_annotator["b"].dual_pairs, 2);
}

#[test]
fn store_replays_after_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    {
        let svc = AnnotationService::new(Store::open(&path).unwrap());
        svc.create_batch(dialogs(5), 0.4, 3).unwrap();
        let t = svc.claim_next_task("a").unwrap().unwrap();
        let q = questionnaire(turns_of(&svc, &t.dialog_id), 2);
        svc.submit_annotation(&t.task_id, q.into()).unwrap();
        svc.claim_next_task("b").unwrap().unwrap();
        // Rejected operations leave no trace in the file.
        assert!(svc.create_batch(dialogs(1), 0.0, 1).is_err());
    }
    let lines = std::fs::read_to_string(&path).unwrap().lines().count();
    assert_eq!(lines, 4);

    let svc = AnnotationService::new(Store::open(&path).unwrap());
    assert_eq!(svc.records().len(), 1);
    assert_eq!(svc.tasks().len(), 7);
    let rows = svc.export_training_set().unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].defect);
    assert_eq!(svc.tasks().iter().filter(|t| t.status == TaskStatus::Claimed).count(), 1);

    std::fs::write(&path, "{\"event\":\"task_claimed\",\"task_id\":\"x\",\"annotator_id\":\"a\"}\n").unwrap();
    assert!(matches!(Store::open(&path), Err(ServiceError::CorruptStore { line: 1, .. })));
}

/// No dialog may ever have two tasks held by one annotator, and no task is
/// claimed or submitted twice, whatever the order of operations.
fn check_invariants(svc: &AnnotationService) {
    let tasks = svc.tasks();
    let mut holders: HashSet<(String, String)> = HashSet::new();
    for t in &tasks {
        if let Some(a) = &t.annotator_id {
            assert!(holders.insert((t.dialog_id.clone(), a.clone())), "{a} holds two copies of {}", t.dialog_id);
        }
    }
    let records = svc.records();
    let ids: HashSet<&str> = records.iter().map(|r| r.task_id.as_str()).collect();
    assert_eq!(ids.len(), records.len());
    let pairs: HashSet<(&str, &str)> = records.iter().map(|r| (r.dialog_id.as_str(), r.annotator_id.as_str())).collect();
    assert_eq!(pairs.len(), records.len());
    for row in svc.export_training_set().unwrap() {
        assert!(records.iter().any(|r| r.dialog_id == row.dialog.dialog_id));
    }
}

#[test]
fn randomized_interleavings_keep_dual_copies_apart() {
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let svc = service();
        svc.create_batch(dialogs(6), 0.5, seed).unwrap();
        let annotators = ["a", "b", "c"];
        for _ in 0..40 {
            let who = annotators[rng.gen_range(0..annotators.len())];
            if rng.gen_bool(0.5) {
                let _ = svc.claim_next_task(who).unwrap();
            } else if let Some(t) = svc
                .tasks()
                .into_iter()
                .find(|t| t.status == TaskStatus::Claimed && t.annotator_id.as_deref() == Some(who))
            {
                let q = questionnaire(turns_of(&svc, &t.dialog_id), rng.gen_range(1..=5));
                svc.submit_annotation(&t.task_id, q.into()).unwrap();
            }
        }
        check_invariants(&svc);
    }
}

#[test]
fn threaded_claims_keep_dual_copies_apart() {
    for seed in 0..20u64 {
        let svc = service();
        svc.create_batch(dialogs(30), 0.5, seed).unwrap();
        std::thread::scope(|s| {
            for who in ["a", "b", "c", "d"] {
                let svc = &svc;
                s.spawn(move || {
                    while let Some(t) = svc.claim_next_task(who).unwrap() {
                        let q = questionnaire(turns_of(svc, &t.dialog_id), 3);
                        svc.submit_annotation(&t.task_id, q.into()).unwrap();
                    }
                });
            }
        });
        check_invariants(&svc);
        assert!(svc.tasks().iter().all(|t| t.status == TaskStatus::Submitted));
        assert_eq!(svc.export_training_set().unwrap().len(), 30);
    }
}
