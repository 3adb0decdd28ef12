//! The labelling state machine.
//!
//! Durable changes are expressed as [`Event`]s; replaying the event log over
//! the same pool rebuilds the same labels. Leases are not durable: they only
//! decide who is shown what, and expire after an idle timeout so abandoned
//! tasks go back into circulation. Time is passed in by the caller as
//! milliseconds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use wordtrust::evalgt::{resolve, GroundTruthRecord, HumanLabel, LabelRecord, Resolution};
use wordtrust::oracle::TrustVerdict;

use crate::pool::{shown_words, PoolItem, ShownWord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("unknown task {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Class {
        task: String,
        annotator: String,
        guess: String,
        correct: bool,
    },
    Label {
        task: String,
        annotator: String,
        label: TrustVerdict,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Guess,
    Label,
}

/// What a client is allowed to see of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub text: String,
    pub classes: Vec<String>,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<Vec<ShownWord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClassResponse {
    /// Sent after a wrong guess; deliberately says nothing about correctness.
    Next,
    Label { explanation: Vec<ShownWord> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Entry {
    /// Guessed right, explanation shown, label outstanding until `expires`.
    AwaitingLabel { expires: u64 },
    /// Guessed right but let the lease lapse.
    Abandoned,
    Done,
}

#[derive(Debug, Clone)]
struct Task {
    item: PoolItem,
    shown: Vec<ShownWord>,
    /// Leases of annotators who have not guessed yet.
    leases: BTreeMap<String, u64>,
    entries: BTreeMap<String, Entry>,
    /// Wrong guesses and labels in submission order.
    labels: Vec<(String, HumanLabel)>,
}

impl Task {
    fn resolution(&self) -> Resolution {
        let labels: Vec<HumanLabel> = self.labels.iter().map(|(_, l)| *l).collect();
        resolve(&labels)
    }

    fn open(&self) -> bool {
        matches!(self.resolution(), Resolution::Pending | Resolution::NeedsThird)
    }

    fn required(&self) -> usize {
        match self.resolution() {
            Resolution::NeedsThird => 3,
            _ => 2,
        }
    }

    fn engaged(&self, now: u64) -> usize {
        let leased = self.leases.values().filter(|&&e| e > now).count();
        let active = self
            .entries
            .values()
            .filter(|e| match e {
                Entry::AwaitingLabel { expires } => *expires > now,
                Entry::Abandoned => false,
                Entry::Done => true,
            })
            .count();
        leased + active
    }

    fn view(&self, phase: Phase) -> TaskView {
        TaskView {
            task_id: self.item.id.clone(),
            text: self.item.text.clone(),
            classes: self.item.classes.clone(),
            phase,
            explanation: (phase == Phase::Label).then(|| self.shown.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Workflow {
    tasks: Vec<Task>,
    index: BTreeMap<String, usize>,
    lease_ms: u64,
}

impl Workflow {
    pub fn new(pool: Vec<PoolItem>, lease_ms: u64) -> Result<Self, ApiError> {
        let mut index = BTreeMap::new();
        let mut tasks = Vec::with_capacity(pool.len());
        for (i, item) in pool.into_iter().enumerate() {
            if index.insert(item.id.clone(), i).is_some() {
                return Err(ApiError::Invalid(format!("duplicate task id {}", item.id)));
            }
            if !item.classes.contains(&item.predicted) {
                return Err(ApiError::Invalid(format!(
                    "task {}: predicted class {:?} is not among its classes",
                    item.id, item.predicted
                )));
            }
            tasks.push(Task {
                shown: shown_words(&item),
                item,
                leases: BTreeMap::new(),
                entries: BTreeMap::new(),
                labels: Vec::new(),
            });
        }
        Ok(Workflow { tasks, index, lease_ms })
    }

    /// Rebuilds the labels recorded in `events`.
    pub fn replay(pool: Vec<PoolItem>, lease_ms: u64, events: &[Event]) -> Result<Self, ApiError> {
        let mut wf = Workflow::new(pool, lease_ms)?;
        for e in events {
            wf.apply(e, 0)?;
        }
        Ok(wf)
    }

    fn task_mut(&mut self, id: &str) -> Result<&mut Task, ApiError> {
        let i = *self.index.get(id).ok_or_else(|| ApiError::NotFound(id.to_string()))?;
        Ok(&mut self.tasks[i])
    }

    fn apply(&mut self, event: &Event, now: u64) -> Result<(), ApiError> {
        let lease_ms = self.lease_ms;
        match event {
            Event::Class { task, annotator, correct, .. } => {
                let t = self.task_mut(task)?;
                if t.entries.contains_key(annotator) || t.labels.iter().any(|(a, _)| a == annotator) {
                    return Err(ApiError::Conflict(format!("{annotator} already guessed on task {task}")));
                }
                t.leases.remove(annotator);
                if *correct {
                    t.entries.insert(annotator.clone(), Entry::AwaitingLabel { expires: now + lease_ms });
                } else {
                    t.labels.push((annotator.clone(), HumanLabel::ClassMispredicted));
                }
            }
            Event::Label { task, annotator, label } => {
                let t = self.task_mut(task)?;
                match t.entries.get(annotator) {
                    Some(Entry::AwaitingLabel { .. }) | Some(Entry::Abandoned) => {}
                    _ => return Err(ApiError::Conflict(format!("{annotator} cannot label task {task}"))),
                }
                t.entries.insert(annotator.clone(), Entry::Done);
                t.labels.push((annotator.clone(), HumanLabel::from(*label)));
            }
        }
        Ok(())
    }

    fn expire(&mut self, now: u64) {
        for t in &mut self.tasks {
            t.leases.retain(|_, e| *e > now);
            for e in t.entries.values_mut() {
                if matches!(e, Entry::AwaitingLabel { expires } if *expires <= now) {
                    *e = Entry::Abandoned;
                }
            }
        }
    }

    /// The task this annotator should work on, or `None` when nothing is
    /// left for them. An unfinished task of theirs is handed back first.
    pub fn next_task(&mut self, annotator: &str, now: u64) -> Option<TaskView> {
        self.expire(now);
        let expires = now + self.lease_ms;
        for t in &mut self.tasks {
            if !t.open() {
                continue;
            }
            if let Some(Entry::AwaitingLabel { .. }) = t.entries.get(annotator) {
                t.entries.insert(annotator.to_string(), Entry::AwaitingLabel { expires });
                return Some(t.view(Phase::Label));
            }
            if t.leases.contains_key(annotator) {
                t.leases.insert(annotator.to_string(), expires);
                return Some(t.view(Phase::Guess));
            }
        }
        for t in &mut self.tasks {
            let seen = t.entries.contains_key(annotator) || t.labels.iter().any(|(a, _)| a == annotator);
            if t.open() && !seen && t.engaged(now) < t.required() {
                t.leases.insert(annotator.to_string(), expires);
                return Some(t.view(Phase::Guess));
            }
        }
        None
    }

    pub fn submit_class(
        &mut self,
        annotator: &str,
        task: &str,
        guess: &str,
        now: u64,
    ) -> Result<(ClassResponse, Event), ApiError> {
        self.expire(now);
        let t = self.task_mut(task)?;
        if !t.item.classes.iter().any(|c| c == guess) {
            return Err(ApiError::Invalid(format!("{guess:?} is not a class of task {task}")));
        }
        if !t.open() || !t.leases.contains_key(annotator) {
            return Err(ApiError::Conflict(format!("task {task} is not awaiting a class guess from {annotator}")));
        }
        let correct = t.item.predicted == guess;
        let shown = t.shown.clone();
        let event = Event::Class {
            task: task.to_string(),
            annotator: annotator.to_string(),
            guess: guess.to_string(),
            correct,
        };
        self.apply(&event, now)?;
        let response = if correct { ClassResponse::Label { explanation: shown } } else { ClassResponse::Next };
        Ok((response, event))
    }

    pub fn submit_label(&mut self, annotator: &str, task: &str, label: &str, now: u64) -> Result<Event, ApiError> {
        self.expire(now);
        let label: TrustVerdict = match label {
            "trustworthy" | "untrustworthy" | "undefined" => label.parse().expect("known label"),
            other => return Err(ApiError::Invalid(format!("unknown label {other:?}"))),
        };
        let t = self.task_mut(task)?;
        let awaiting = matches!(t.entries.get(annotator), Some(Entry::AwaitingLabel { .. }));
        if !t.open() || !awaiting {
            return Err(ApiError::Conflict(format!("task {task} is not awaiting a label from {annotator}")));
        }
        let event = Event::Label {
            task: task.to_string(),
            annotator: annotator.to_string(),
            label,
        };
        self.apply(&event, now)?;
        Ok(event)
    }

    pub fn resolution(&self, task: &str) -> Option<Resolution> {
        self.index.get(task).map(|&i| self.tasks[i].resolution())
    }

    /// Label history of every task that has at least one label.
    pub fn records(&self) -> Vec<LabelRecord> {
        self.tasks
            .iter()
            .filter(|t| !t.labels.is_empty())
            .map(|t| LabelRecord {
                instance_id: t.item.id.clone(),
                oracle_verdict: t.item.oracle,
                annotator_labels: t.labels.clone(),
            })
            .collect()
    }

    /// Settled tasks as ground-truth records, in pool order.
    pub fn dataset(&self) -> Vec<GroundTruthRecord> {
        self.tasks
            .iter()
            .filter_map(|t| match t.resolution() {
                Resolution::Final(label) => Some(GroundTruthRecord {
                    id: t.item.id.clone(),
                    oracle: t.item.oracle,
                    label,
                }),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str) -> PoolItem {
        PoolItem {
            id: id.into(),
            text: "the team scored a late goal".into(),
            classes: vec!["food".into(), "sport".into()],
            predicted: "sport".into(),
            explanation: vec![("goal".into(), 0.3), ("team".into(), 0.2)],
            oracle: TrustVerdict::Trustworthy,
        }
    }

    fn wf(n: usize) -> Workflow {
        Workflow::new((0..n).map(|i| item(&format!("t{i}"))).collect(), 1000).unwrap()
    }

    #[test]
    fn guess_view_hides_the_explanation() {
        let mut w = wf(1);
        let v = w.next_task("ann", 0).unwrap();
        assert_eq!(v.phase, Phase::Guess);
        assert!(v.explanation.is_none());
        assert!(!serde_json::to_string(&v).unwrap().contains("explanation"));
    }

    #[test]
    fn agreement_and_exhaustion() {
        let mut w = wf(1);
        for a in ["x", "y"] {
            let v = w.next_task(a, 0).unwrap();
            let (resp, _) = w.submit_class(a, &v.task_id, "sport", 0).unwrap();
            assert!(matches!(resp, ClassResponse::Label { ref explanation } if explanation.len() == 2));
            w.submit_label(a, "t0", "untrustworthy", 0).unwrap();
        }
        assert_eq!(w.resolution("t0"), Some(Resolution::Final(TrustVerdict::Untrustworthy)));
        assert!(w.next_task("x", 0).is_none());
        assert!(w.next_task("z", 0).is_none());
    }

    #[test]
    fn disagreement_needs_a_third_annotator() {
        let mut w = wf(1);
        for (a, l) in [("x", "trustworthy"), ("y", "undefined")] {
            w.next_task(a, 0).unwrap();
            w.submit_class(a, "t0", "sport", 0).unwrap();
            w.submit_label(a, "t0", l, 0).unwrap();
        }
        assert_eq!(w.resolution("t0"), Some(Resolution::NeedsThird));
        assert!(w.next_task("x", 0).is_none());
        w.next_task("z", 0).unwrap();
        w.submit_class("z", "t0", "sport", 0).unwrap();
        w.submit_label("z", "t0", "untrustworthy", 0).unwrap();
        assert_eq!(w.resolution("t0"), Some(Resolution::Discarded));
        assert!(w.dataset().is_empty());
    }

    #[test]
    fn wrong_guess_is_neutral_and_discards() {
        let mut w = wf(1);
        w.next_task("x", 0).unwrap();
        let (resp, _) = w.submit_class("x", "t0", "food", 0).unwrap();
        assert_eq!(resp, ClassResponse::Next);
        assert_eq!(w.resolution("t0"), Some(Resolution::Discarded));
        assert!(matches!(w.submit_class("x", "t0", "sport", 0), Err(ApiError::Conflict(_))));
    }

    #[test]
    fn state_errors() {
        let mut w = wf(2);
        assert!(matches!(w.submit_class("x", "t0", "sport", 0), Err(ApiError::Conflict(_))));
        w.next_task("x", 0).unwrap();
        assert!(matches!(w.submit_class("x", "t0", "golf", 0), Err(ApiError::Invalid(_))));
        assert!(matches!(w.submit_class("x", "nope", "sport", 0), Err(ApiError::NotFound(_))));
        assert!(matches!(w.submit_label("x", "t0", "trustworthy", 0), Err(ApiError::Conflict(_))));
        w.submit_class("x", "t0", "sport", 0).unwrap();
        assert!(matches!(w.submit_class("x", "t0", "sport", 0), Err(ApiError::Conflict(_))));
        assert!(matches!(w.submit_label("x", "t0", "great", 0), Err(ApiError::Invalid(_))));
        w.submit_label("x", "t0", "trustworthy", 0).unwrap();
        assert!(matches!(w.submit_label("x", "t0", "trustworthy", 0), Err(ApiError::Conflict(_))));
    }

    #[test]
    fn leases_expire_and_tasks_recirculate() {
        let mut w = wf(1);
        w.next_task("x", 0).unwrap();
        w.next_task("y", 0).unwrap();
        assert!(w.next_task("z", 10).is_none());
        let v = w.next_task("z", 1500).unwrap();
        assert_eq!(v.task_id, "t0");
        assert!(matches!(w.submit_class("x", "t0", "sport", 1600), Err(ApiError::Conflict(_))));
    }

    #[test]
    fn pending_label_is_handed_back() {
        let mut w = wf(2);
        w.next_task("x", 0).unwrap();
        w.submit_class("x", "t0", "sport", 0).unwrap();
        let v = w.next_task("x", 10).unwrap();
        assert_eq!((v.task_id.as_str(), v.phase), ("t0", Phase::Label));
        assert!(v.explanation.is_some());
    }

    #[test]
    fn replay_rebuilds_the_dataset() {
        let mut w = wf(3);
        let mut log = Vec::new();
        for (a, labels) in [("x", ["trustworthy", "undefined", "trustworthy"]), ("y", ["trustworthy", "undefined", "untrustworthy"])] {
            for (i, l) in labels.iter().enumerate() {
                let task = format!("t{i}");
                w.next_task(a, 0).unwrap();
                log.push(w.submit_class(a, &task, "sport", 0).unwrap().1);
                log.push(w.submit_label(a, &task, l, 0).unwrap());
            }
        }
        let r = Workflow::replay((0..3).map(|i| item(&format!("t{i}"))).collect(), 1000, &log).unwrap();
        assert_eq!(r.dataset(), w.dataset());
        assert_eq!(r.records(), w.records());
        assert_eq!(w.dataset().len(), 2);
    }
}
