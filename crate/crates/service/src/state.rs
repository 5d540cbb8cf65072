//! Session state machine. No I/O happens here: callers persist the
//! [`LogEvent`] returned by a `prepare_*` call and then [`apply`] it.
//!
//! [`apply`]: AnnotationService::apply

use std::collections::{BTreeMap, BTreeSet};

use bwslex::design::TupleDesign;
use bwslex::item::{ItemId, ItemSet};
use bwslex::quality::{
    filter_annotations, grade_response, update_and_lockout, AnnotatorRecord, GoldQuestion, GradedResponse,
    LockoutPolicy, DEFAULT_GOLD_FRACTION,
};
use bwslex::scoring::Annotation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::template::{InstructionTemplate, TemplateStore};

const SESSION_ID_SALT: u64 = 0x5E55_10A1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub dimension: String,
    /// Regular annotations wanted per tuple.
    pub per_tuple_target: usize,
    /// Probability that a served tuple is a gold question.
    pub gold_rate: f64,
    pub policy: LockoutPolicy,
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            dimension: "anger".into(),
            per_tuple_target: 4,
            gold_rate: DEFAULT_GOLD_FRACTION,
            policy: LockoutPolicy::default(),
            seed: 0,
        }
    }
}

/// One line of the append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    SessionOpened {
        session_id: String,
        annotator_id: String,
        dimension: String,
        ordinal: u64,
    },
    Response {
        session_id: String,
        annotation: Annotation,
        nonce: Option<String>,
        gold: Option<GradedResponse>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub annotator_id: String,
    pub dimension: String,
    /// Responses submitted so far.
    pub queue_position: usize,
    ordinal: u64,
    pending: Option<usize>,
    acks: BTreeMap<String, (usize, ItemId, ItemId, Ack)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldFeedback {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub tuple_ref: usize,
    pub gold_feedback: Option<GoldFeedback>,
    pub locked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRequest {
    pub tuple_ref: usize,
    pub best: ItemId,
    pub worst: ItemId,
    #[serde(default)]
    pub nonce: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermView {
    pub id: ItemId,
    pub term: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub answered: usize,
    /// Tuples this session could still be served, including a pending one.
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextTuple {
    Tuple {
        tuple_ref: usize,
        dimension: String,
        terms: Vec<TermView>,
        most_prompt: String,
        least_prompt: String,
        progress: Progress,
    },
    Done { progress: Progress },
    Locked { progress: Progress },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewSession {
    pub session_id: String,
    pub annotator_id: String,
    pub dimension: String,
    pub tuple_size: usize,
    pub instructions: InstructionTemplate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub annotator_id: String,
    pub answered: usize,
    pub locked: bool,
    pub gold_attempted: u32,
    pub gold_correct: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub dimension: String,
    pub tuples: usize,
    pub gold_tuples: usize,
    pub per_tuple_target: usize,
    pub responses: usize,
    /// Regular tuples that reached the target.
    pub complete_tuples: usize,
    pub locked_annotators: Vec<String>,
    pub sessions: Vec<SessionStatus>,
}

/// Outcome of validating a response.
#[derive(Debug, Clone, PartialEq)]
pub enum Prepared {
    /// A retry of an already applied response; nothing to persist.
    Repeat(Ack),
    Event(LogEvent),
}

#[derive(Debug, Clone)]
pub struct AnnotationService {
    config: ServiceConfig,
    design: TupleDesign,
    items: ItemSet,
    gold: BTreeMap<usize, GoldQuestion>,
    templates: TemplateStore,
    sessions: BTreeMap<String, Session>,
    records: BTreeMap<String, AnnotatorRecord>,
    answered_by: BTreeMap<String, BTreeSet<usize>>,
    completed: Vec<usize>,
    in_flight: Vec<usize>,
    log: Vec<Annotation>,
    next_ordinal: u64,
}

impl AnnotationService {
    pub fn new(
        design: TupleDesign,
        items: ItemSet,
        gold: Vec<GoldQuestion>,
        templates: TemplateStore,
        config: ServiceConfig,
    ) -> Result<Self, ServiceError> {
        for g in &gold {
            g.check(&design)?;
        }
        for (t, tuple) in design.tuples().iter().enumerate() {
            if let Some(id) = tuple.iter().find(|id| !items.contains(**id)) {
                return Err(ServiceError::InvalidChoice(format!("tuple {t} uses unknown item {id}")));
            }
        }
        let tuples = design.len();
        Ok(Self {
            config,
            design,
            items,
            gold: gold.into_iter().map(|g| (g.tuple_index, g)).collect(),
            templates,
            sessions: BTreeMap::new(),
            records: BTreeMap::new(),
            answered_by: BTreeMap::new(),
            completed: vec![0; tuples],
            in_flight: vec![0; tuples],
            log: Vec::new(),
            next_ordinal: 0,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn design(&self) -> &TupleDesign {
        &self.design
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn record(&self, annotator_id: &str) -> Option<&AnnotatorRecord> {
        self.records.get(annotator_id)
    }

    pub fn is_gold(&self, tuple: usize) -> bool {
        self.gold.contains_key(&tuple)
    }

    fn template(&self, dimension: &str) -> Result<&InstructionTemplate, ServiceError> {
        if dimension != self.config.dimension {
            return Err(ServiceError::UnknownDimension {
                requested: dimension.to_string(),
                served: self.config.dimension.clone(),
            });
        }
        self.templates
            .get(dimension)
            .ok_or_else(|| ServiceError::MissingTemplate(dimension.to_string()))
    }

    /// Validates a new-session request. Anonymous sessions get an id derived
    /// from the session id.
    pub fn prepare_session(&self, dimension: &str, annotator_id: Option<&str>) -> Result<LogEvent, ServiceError> {
        self.template(dimension)?;
        let ordinal = self.next_ordinal;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ SESSION_ID_SALT);
        rng.set_stream(ordinal);
        let session_id = format!("s{ordinal}-{:016x}", rng.random::<u64>());
        let annotator_id = match annotator_id.map(str::trim) {
            Some(id) if !id.is_empty() => id.to_string(),
            _ => format!("anon-{session_id}"),
        };
        Ok(LogEvent::SessionOpened {
            session_id,
            annotator_id,
            dimension: dimension.to_string(),
            ordinal,
        })
    }

    /// Payload for a session that has just been applied.
    pub fn session_payload(&self, session_id: &str) -> Result<NewSession, ServiceError> {
        let session = self.get(session_id)?;
        Ok(NewSession {
            session_id: session.session_id.clone(),
            annotator_id: session.annotator_id.clone(),
            dimension: session.dimension.clone(),
            tuple_size: self.design.config().tuple_size,
            instructions: self.template(&session.dimension)?.clone(),
        })
    }

    fn get(&self, session_id: &str) -> Result<&Session, ServiceError> {
        self.sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))
    }

    fn is_locked(&self, annotator_id: &str) -> bool {
        self.records.get(annotator_id).is_some_and(|r| r.locked_out)
    }

    fn open_regular<'a>(&'a self, annotator_id: &'a str, skip: Option<usize>) -> impl Iterator<Item = usize> + 'a {
        let answered = self.answered_by.get(annotator_id);
        (0..self.design.len()).filter(move |&t| {
            !self.gold.contains_key(&t)
                && Some(t) != skip
                && self.completed[t] + self.in_flight[t] < self.config.per_tuple_target
                && !answered.is_some_and(|a| a.contains(&t))
        })
    }

    fn progress(&self, session: &Session) -> Progress {
        Progress {
            answered: session.queue_position,
            remaining: self.open_regular(&session.annotator_id, session.pending).count()
                + usize::from(session.pending.is_some()),
        }
    }

    /// Serves the session's pending tuple, or picks a new one: a gold question
    /// with probability `gold_rate`, otherwise the least-annotated open tuple.
    pub fn next_tuple(&mut self, session_id: &str) -> Result<NextTuple, ServiceError> {
        let session = self.get(session_id)?.clone();
        if self.is_locked(&session.annotator_id) {
            self.release(session_id);
            let session = self.get(session_id)?;
            return Ok(NextTuple::Locked { progress: self.progress(session) });
        }
        let tuple = match session.pending {
            Some(t) => t,
            None => match self.choose(&session) {
                Some(t) => {
                    if !self.gold.contains_key(&t) {
                        self.in_flight[t] += 1;
                    }
                    self.sessions.get_mut(session_id).expect("session exists").pending = Some(t);
                    t
                }
                None => return Ok(NextTuple::Done { progress: self.progress(&session) }),
            },
        };
        let session = self.get(session_id)?;
        let template = self.template(&session.dimension)?;
        let terms = self.design.tuple(tuple).expect("scheduled tuple exists")
            .iter()
            .map(|&id| TermView {
                id,
                term: self.items.surface(id).unwrap_or_default().to_string(),
            })
            .collect();
        Ok(NextTuple::Tuple {
            tuple_ref: tuple,
            dimension: session.dimension.clone(),
            terms,
            most_prompt: template.most_prompt.clone(),
            least_prompt: template.least_prompt.clone(),
            progress: self.progress(session),
        })
    }

    fn choose(&self, session: &Session) -> Option<usize> {
        let regular = self
            .open_regular(&session.annotator_id, None)
            .min_by_key(|&t| (self.completed[t] + self.in_flight[t], t))?;
        // the draw depends only on the session and how far it has got, so a
        // replayed log reproduces it
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(session.ordinal);
        rng.set_word_pos(session.queue_position as u128 * 16);
        if self.gold.is_empty() || !rng.random_bool(self.config.gold_rate) {
            return Some(regular);
        }
        let answered = self.answered_by.get(&session.annotator_id);
        let fresh: Vec<usize> = self
            .gold
            .keys()
            .copied()
            .filter(|t| !answered.is_some_and(|a| a.contains(t)))
            .collect();
        if fresh.is_empty() {
            return Some(regular);
        }
        Some(fresh[rng.random_range(0..fresh.len())])
    }

    fn release(&mut self, session_id: &str) {
        if let Some(session) = self.sessions.get_mut(session_id) {
            if let Some(t) = session.pending.take() {
                if !self.gold.contains_key(&t) {
                    self.in_flight[t] -= 1;
                }
            }
        }
    }

    /// Validates a response. A retry carrying an already used nonce returns
    /// the original ack.
    pub fn prepare_response(
        &self,
        session_id: &str,
        request: &ResponseRequest,
        timestamp: Option<i64>,
    ) -> Result<Prepared, ServiceError> {
        let session = self.get(session_id)?;
        if let Some(nonce) = &request.nonce {
            if let Some((tuple, best, worst, ack)) = session.acks.get(nonce) {
                if (*tuple, *best, *worst) == (request.tuple_ref, request.best, request.worst) {
                    return Ok(Prepared::Repeat(ack.clone()));
                }
                return Err(ServiceError::NonceReuse(nonce.clone()));
            }
        }
        if self.is_locked(&session.annotator_id) {
            return Err(ServiceError::SessionLocked(session_id.to_string()));
        }
        let tuple = self
            .design
            .tuple(request.tuple_ref)
            .ok_or(ServiceError::UnknownTuple(request.tuple_ref))?;
        if session.pending != Some(request.tuple_ref) {
            return Err(ServiceError::TupleNotServed {
                session: session_id.to_string(),
                tuple: request.tuple_ref,
            });
        }
        if request.best == request.worst {
            return Err(ServiceError::InvalidChoice("best and worst must differ".into()));
        }
        for id in [request.best, request.worst] {
            if !tuple.contains(&id) {
                return Err(ServiceError::InvalidChoice(format!("item {id} is not in tuple {}", request.tuple_ref)));
            }
        }
        let annotation = Annotation {
            tuple_index: request.tuple_ref,
            annotator_id: session.annotator_id.clone(),
            best: request.best,
            worst: request.worst,
            timestamp,
        };
        let gold = match self.gold.get(&request.tuple_ref) {
            Some(g) => Some(grade_response(g, &annotation)?),
            None => None,
        };
        Ok(Prepared::Event(LogEvent::Response {
            session_id: session_id.to_string(),
            annotation,
            nonce: request.nonce.clone(),
            gold,
        }))
    }

    /// Applies a persisted event. Returns the ack for responses.
    pub fn apply(&mut self, event: &LogEvent) -> Result<Option<Ack>, ServiceError> {
        match event {
            LogEvent::SessionOpened { session_id, annotator_id, dimension, ordinal } => {
                self.sessions.insert(
                    session_id.clone(),
                    Session {
                        session_id: session_id.clone(),
                        annotator_id: annotator_id.clone(),
                        dimension: dimension.clone(),
                        queue_position: 0,
                        ordinal: *ordinal,
                        pending: None,
                        acks: BTreeMap::new(),
                    },
                );
                self.records
                    .entry(annotator_id.clone())
                    .or_insert_with(|| AnnotatorRecord::new(annotator_id.clone()));
                self.next_ordinal = self.next_ordinal.max(ordinal + 1);
                Ok(None)
            }
            LogEvent::Response { session_id, annotation, nonce, gold } => {
                let t = annotation.tuple_index;
                if t >= self.design.len() {
                    return Err(ServiceError::UnknownTuple(t));
                }
                let session = self
                    .sessions
                    .get_mut(session_id)
                    .ok_or_else(|| ServiceError::UnknownSession(session_id.clone()))?;
                if session.pending == Some(t) {
                    session.pending = None;
                    if !self.gold.contains_key(&t) {
                        self.in_flight[t] -= 1;
                    }
                }
                session.queue_position += 1;
                let annotator = session.annotator_id.clone();
                if !self.gold.contains_key(&t) {
                    self.completed[t] += 1;
                }
                self.answered_by.entry(annotator.clone()).or_default().insert(t);
                self.log.push(annotation.clone());

                let record = self
                    .records
                    .entry(annotator.clone())
                    .or_insert_with(|| AnnotatorRecord::new(annotator.clone()));
                if let Some(graded) = gold {
                    let was_locked = record.locked_out;
                    *record = update_and_lockout(record, &[*graded], &self.config.policy);
                    if record.locked_out && !was_locked {
                        tracing::info!(annotator = %annotator, "annotator locked out");
                    }
                }
                let ack = Ack {
                    tuple_ref: t,
                    gold_feedback: gold.map(|g| {
                        if g.is_fully_correct() {
                            GoldFeedback::Correct
                        } else {
                            GoldFeedback::Incorrect
                        }
                    }),
                    locked: record.locked_out,
                };
                if let Some(nonce) = nonce {
                    let session = self.sessions.get_mut(session_id).expect("session exists");
                    session.acks.insert(nonce.clone(), (t, annotation.best, annotation.worst, ack.clone()));
                }
                Ok(Some(ack))
            }
        }
    }

    /// Every response in log order.
    pub fn raw_annotations(&self) -> &[Annotation] {
        &self.log
    }

    /// Responses in log order, without locked-out annotators' rows unless
    /// `include_discarded`.
    pub fn export(&self, include_discarded: bool) -> Vec<Annotation> {
        if include_discarded {
            return self.log.clone();
        }
        filter_annotations(&self.log, &self.records).0
    }

    pub fn records(&self) -> &BTreeMap<String, AnnotatorRecord> {
        &self.records
    }

    pub fn status(&self) -> StatusReport {
        let sessions = self
            .sessions
            .values()
            .map(|s| {
                let record = &self.records[&s.annotator_id];
                SessionStatus {
                    session_id: s.session_id.clone(),
                    annotator_id: s.annotator_id.clone(),
                    answered: s.queue_position,
                    locked: record.locked_out,
                    gold_attempted: record.gold_attempted,
                    gold_correct: record.gold_correct,
                }
            })
            .collect();
        StatusReport {
            dimension: self.config.dimension.clone(),
            tuples: self.design.len(),
            gold_tuples: self.gold.len(),
            per_tuple_target: self.config.per_tuple_target,
            responses: self.log.len(),
            complete_tuples: (0..self.design.len())
                .filter(|t| !self.gold.contains_key(t) && self.completed[*t] >= self.config.per_tuple_target)
                .count(),
            locked_annotators: self
                .records
                .values()
                .filter(|r| r.locked_out)
                .map(|r| r.annotator_id.clone())
                .collect(),
            sessions,
        }
    }
}
