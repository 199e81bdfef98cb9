//! ROAR and Recursive ROAR orchestration: shared 0 %/100 % runs, per-measure
//! masking chains with retraining, caching, the run store and the tabular
//! validation experiment.

mod cache;
mod curves;
mod store;
mod validation;

pub use cache::{content_key, CachedRun, RunCache, CACHE_ENV};
pub use curves::{build_curves, CurveBundle, FaithfulnessSummary, MeasureCurves, SeedCurve, SeedScore, SeriesSummary};
pub use store::RunStore;
pub use curves::CI_LEVEL;
pub use validation::{
    run_synthetic_validation, ValidationBundle, ValidationError, ValidationConfig, ValidationCurves, RECURSIVE_TOLERANCE,
};

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Observation, SplitKind, TokenDataset};
use crate::grad::{Checkpoint, ParamSet};
use crate::importance::{self, stable_seed, Context, ImportanceMap, Measure, IG_STEPS};
use crate::masking::{apply_mask, extend_mask, MaskState, Ranking, StepSchedule};
use crate::metrics::{classification_metric, MetricKind};
use crate::models::{train, Architecture, ModelConfig, ModelError, TrainedModel};

/// A plan aborts when more than this fraction of its runs fail.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("{failed} of {total} runs failed (limit {limit:.0} %)", limit = MAX_FAILURE_RATE * 100.0)]
    TooManyFailures { failed: usize, total: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoarMode {
    /// Importance recomputed from the previous iteration's model.
    Recursive,
    /// Importance computed once from the unmasked model and frozen.
    Classic,
}

impl RoarMode {
    pub fn name(self) -> &'static str {
        match self {
            RoarMode::Recursive => "recursive",
            RoarMode::Classic => "classic",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub name: String,
    pub dataset: Arc<TokenDataset>,
    /// Architecture and training settings; the seed field is ignored and
    /// replaced by a derived initialization seed per run.
    pub model: ModelConfig,
    pub measures: Vec<Measure>,
    pub schedule: StepSchedule,
    pub seeds: Vec<u64>,
    pub mode: RoarMode,
    pub metric: MetricKind,
    pub ranking: Ranking,
    pub ig_steps: usize,
}

impl ExperimentPlan {
    pub fn new(name: impl Into<String>, dataset: Arc<TokenDataset>, model: ModelConfig) -> Self {
        Self {
            name: name.into(),
            dataset,
            model,
            measures: vec![Measure::Random],
            schedule: StepSchedule::default(),
            seeds: (1..=5).collect(),
            mode: RoarMode::Recursive,
            metric: MetricKind::Accuracy,
            ranking: Ranking::Signed,
            ig_steps: IG_STEPS,
        }
    }

    /// Measures in run order, with the random baseline always present.
    pub fn measures_with_baseline(&self) -> Vec<Measure> {
        let mut m = self.measures.clone();
        if !m.contains(&Measure::Random) {
            m.push(Measure::Random);
        }
        m.sort();
        m.dedup();
        m
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Plan(m));
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        self.schedule.validate().map_err(|e| HarnessError::Plan(e.to_string()))?;
        self.model.validate().map_err(|e| HarnessError::Plan(e.to_string()))?;
        if self.model.vocab_size != self.dataset.vocab.len() {
            return bad(format!(
                "model vocab_size {} differs from the dataset's {}",
                self.model.vocab_size,
                self.dataset.vocab.len()
            ));
        }
        if self.model.num_classes != self.dataset.num_classes {
            return bad("model num_classes differs from the dataset".into());
        }
        let paired = self.model.architecture == Architecture::BilstmAttentionPaired;
        if paired != self.dataset.is_paired() {
            return bad("paired architecture requires a paired dataset and vice versa".into());
        }
        if self.model.architecture == Architecture::Linear && self.measures.contains(&Measure::Attention) {
            return bad("attention importance needs an attention model".into());
        }
        let annotated = || SplitKind::ALL.iter().all(|&k| self.dataset.split(k).iter().all(|o| o.evidence.is_some()));
        if self.measures.iter().any(|m| matches!(m, Measure::Oracle | Measure::OracleFirst)) && !annotated() {
            return bad("oracle measures need evidence annotations on every observation".into());
        }
        if self.ig_steps == 0 {
            return bad("ig_steps must be at least 1".into());
        }
        for kind in SplitKind::ALL {
            if self.dataset.split(kind).is_empty() {
                return bad(format!("{} split is empty", kind.name()));
            }
        }
        Ok(())
    }

    fn model_json(&self) -> String {
        let mut m = self.model.clone();
        m.seed = 0;
        serde_json::to_string(&m).expect("config serializes")
    }

    /// Hash over everything that determines the plan's records.
    pub fn plan_hash(&self) -> String {
        let measures: Vec<&str> = self.measures_with_baseline().iter().map(|m| m.name()).collect();
        content_key(&[
            "plan",
            &self.dataset.content_hash(),
            &self.model_json(),
            &measures.join(","),
            &serde_json::to_string(&self.schedule).expect("schedule serializes"),
            &serde_json::to_string(&self.seeds).expect("seeds serialize"),
            self.mode.name(),
            &format!("{:?}", self.ranking),
            &self.ig_steps.to_string(),
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { reason: String },
}

/// Result of one (measure, seed, iteration) training run. Shared 0 % and
/// 100 % runs have no measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub measure: Option<Measure>,
    pub seed: u64,
    pub iteration: usize,
    pub ratio: f64,
    pub status: RunStatus,
    pub metric: MetricKind,
    pub performance: Option<f64>,
    pub test_predictions: Vec<usize>,
    pub init_seed: u64,
    pub attempts: u32,
    pub best_epoch: usize,
    pub val_loss: Option<f64>,
    pub masked_tokens: usize,
    pub checkpoint: Option<String>,
    pub importance: Option<String>,
    pub masks: String,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Records of one executed plan.
#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub plan_hash: String,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub measures: Vec<Measure>,
    pub initial: BTreeMap<u64, RunRecord>,
    pub full: BTreeMap<u64, RunRecord>,
    /// Per (measure, seed): records for iterations between the shared ends.
    pub chains: BTreeMap<(Measure, u64), Vec<RunRecord>>,
    pub trainings: usize,
}

impl PlanOutcome {
    /// Performance at every ratio for `(measure, seed)`; `None` marks a
    /// failed run.
    pub fn curve(&self, measure: Measure, seed: u64) -> Vec<Option<f64>> {
        let mut out = vec![self.initial[&seed].performance];
        out.extend(self.chains[&(measure, seed)].iter().map(|r| r.performance));
        out.push(self.full[&seed].performance);
        out
    }

    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.initial.values().chain(self.chains.values().flatten()).chain(self.full.values())
    }

    pub fn failed(&self) -> usize {
        self.records().filter(|r| !r.completed()).count()
    }

    pub fn total(&self) -> usize {
        self.records().count()
    }
}

#[derive(Clone, Copy)]
enum Shared {
    Initial,
    Full,
}

impl Shared {
    fn name(self) -> &'static str {
        match self {
            Shared::Initial => "initial",
            Shared::Full => "full",
        }
    }
}

/// Everything derived once from a plan and shared by its runs.
struct Prepared<'a> {
    plan: &'a ExperimentPlan,
    dataset_hash: String,
    model_json: String,
    schedule_json: String,
    /// Observations in global order: train, validation, test.
    obs: Vec<&'a Observation>,
    ids: Vec<u64>,
    maskable: Vec<Vec<bool>>,
    ranges: [std::ops::Range<usize>; 3],
    plan_hash: String,
    ratios: Vec<f64>,
    chain_end: usize,
    golds: Vec<usize>,
}

impl<'a> Prepared<'a> {
    fn new(plan: &'a ExperimentPlan) -> Self {
        let ds = &plan.dataset;
        let mut obs = Vec::new();
        let mut ranges: [std::ops::Range<usize>; 3] = [0..0, 0..0, 0..0];
        for (i, kind) in SplitKind::ALL.into_iter().enumerate() {
            let start = obs.len();
            obs.extend(ds.split(kind).iter());
            ranges[i] = start..obs.len();
        }
        let ids = (0..obs.len() as u64).collect();
        let maskable: Vec<Vec<bool>> = obs.iter().map(|o| o.maskable()).collect();
        let max_m = maskable.iter().map(|m| m.iter().filter(|&&b| b).count()).max().unwrap_or(0);
        let total = plan.schedule.iterations(max_m);
        let mut ratios: Vec<f64> = (0..=total).map(|j| plan.schedule.ratio(j, total)).collect();
        let saturates = maskable.iter().all(|m| {
            let c = m.iter().filter(|&&b| b).count();
            plan.schedule.cumulative_target(total, c) == c
        });
        let chain_end = if saturates && *ratios.last().unwrap() == 1.0 {
            total - 1
        } else {
            if *ratios.last().unwrap() >= 1.0 {
                ratios.pop();
            }
            ratios.push(1.0);
            total
        };
        let golds = ds.test.iter().map(|o| o.label).collect();
        Self {
            plan,
            dataset_hash: ds.content_hash(),
            model_json: plan.model_json(),
            schedule_json: serde_json::to_string(&plan.schedule).expect("schedule serializes"),
            obs,
            ids,
            maskable,
            ranges,
            plan_hash: plan.plan_hash(),
            ratios,
            chain_end,
            golds,
        }
    }

    fn shared_key(&self, which: Shared, seed: u64) -> String {
        content_key(&["shared", which.name(), &self.dataset_hash, &self.model_json, &seed.to_string()])
    }

    fn iteration_key(&self, measure: Measure, seed: u64, j: usize) -> String {
        content_key(&[
            "iteration",
            &self.dataset_hash,
            &self.model_json,
            measure.name(),
            &seed.to_string(),
            self.plan.mode.name(),
            &self.schedule_json,
            &format!("{:?}", self.plan.ranking),
            &self.plan.ig_steps.to_string(),
            &j.to_string(),
        ])
    }

    fn masked(&self, masks: &[Vec<usize>]) -> Vec<Observation> {
        self.obs
            .iter()
            .zip(masks)
            .map(|(o, m)| {
                let st = MaskState { masked: m.clone(), ..MaskState::default() };
                apply_mask(o, &st)
            })
            .collect()
    }

    fn performance(&self, preds: &[usize]) -> Option<f64> {
        classification_metric(preds, &self.golds, self.plan.dataset.num_classes, self.plan.metric).ok()
    }

    fn model_for(&self, ckpt: &Checkpoint) -> Result<TrainedModel, String> {
        let params = ParamSet::from_checkpoint(ckpt.clone()).map_err(|e| e.to_string())?;
        Ok(TrainedModel::from_params(self.plan.model.clone(), params))
    }
}

/// Runs plans against a cache and an optional on-disk run store.
pub struct Harness {
    pub cache: RunCache,
    store: Option<RunStore>,
    jobs: usize,
    trainings: AtomicUsize,
}

impl Harness {
    pub fn new(cache: RunCache) -> Self {
        Self { cache, store: None, jobs: 1, trainings: AtomicUsize::new(0) }
    }

    /// Writes every record under `<root>/runs/<plan-hash>/...`.
    pub fn with_store(mut self, root: impl Into<PathBuf>) -> Self {
        self.store = Some(RunStore::new(root));
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    /// Trainings performed since this harness was created.
    pub fn trainings(&self) -> usize {
        self.trainings.load(Ordering::Relaxed)
    }

    pub fn run(&self, plan: &ExperimentPlan) -> Result<PlanOutcome, HarnessError> {
        plan.validate()?;
        let prep = Prepared::new(plan);
        let plan_hash = prep.plan_hash.clone();
        let before = self.trainings();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| HarnessError::Plan(e.to_string()))?;
        let measures = plan.measures_with_baseline();

        let shared: Vec<(u64, Arc<CachedRun>, Arc<CachedRun>)> = pool.install(|| {
            plan.seeds
                .par_iter()
                .map(|&seed| {
                    let a = self.shared_run(&prep, Shared::Initial, seed);
                    let b = self.shared_run(&prep, Shared::Full, seed);
                    (seed, a, b)
                })
                .collect()
        });
        let mut initial = BTreeMap::new();
        let mut full = BTreeMap::new();
        for (seed, a, b) in &shared {
            initial.insert(*seed, Arc::clone(a));
            full.insert(*seed, Arc::clone(b));
        }

        let tasks: Vec<(Measure, u64)> =
            measures.iter().flat_map(|&m| plan.seeds.iter().map(move |&s| (m, s))).collect();
        let chains: Vec<((Measure, u64), Vec<RunRecord>)> = pool.install(|| {
            tasks
                .par_iter()
                .map(|&(m, s)| self.chain(&prep, m, s, &initial[&s]).map(|r| ((m, s), r)))
                .collect::<std::io::Result<_>>()
        })?;

        let mut records_initial = BTreeMap::new();
        let mut records_full = BTreeMap::new();
        for (seed, a, b) in shared {
            let j_full = prep.ratios.len() - 1;
            let (ra, rb) = (self.finish_shared(&prep, &a, 0), self.finish_shared(&prep, &b, j_full));
            self.persist(&prep, &ra, Some(&a))?;
            self.persist(&prep, &rb, Some(&b))?;
            records_initial.insert(seed, ra);
            records_full.insert(seed, rb);
        }
        let mut chain_map = BTreeMap::new();
        for (key, records) in chains {
            chain_map.insert(key, records);
        }
        let outcome = PlanOutcome {
            plan_hash: plan_hash.clone(),
            ratios: prep.ratios.clone(),
            seeds: plan.seeds.clone(),
            measures,
            initial: records_initial,
            full: records_full,
            chains: chain_map,
            trainings: self.trainings() - before,
        };
        let (failed, total) = (outcome.failed(), outcome.total());
        if failed as f64 > MAX_FAILURE_RATE * total as f64 {
            return Err(HarnessError::TooManyFailures { failed, total });
        }
        Ok(outcome)
    }

    fn finish_shared(&self, prep: &Prepared<'_>, run: &CachedRun, j: usize) -> RunRecord {
        let mut r = run.record.clone();
        r.iteration = j;
        r.ratio = prep.ratios[j];
        r.metric = prep.plan.metric;
        r.performance = if r.completed() { prep.performance(&r.test_predictions) } else { None };
        r
    }

    /// Trains with one retry on failure; returns the model, attempts and
    /// the seed that succeeded.
    fn train_with_retry(
        &self,
        prep: &Prepared<'_>,
        init_seed: u64,
        masked: &[Observation],
    ) -> (Result<(TrainedModel, u64), String>, u32) {
        let train_split = &masked[prep.ranges[0].clone()];
        let val_split = &masked[prep.ranges[1].clone()];
        let mut seed = init_seed;
        let mut last = String::new();
        for attempt in 1..=2u32 {
            let mut cfg = prep.plan.model.clone();
            cfg.seed = seed;
            self.trainings.fetch_add(1, Ordering::Relaxed);
            match train(&cfg, train_split, val_split) {
                Ok(m) => return (Ok((m, seed)), attempt),
                Err(e @ (ModelError::Diverged { .. } | ModelError::Grad(_))) => last = e.to_string(),
                Err(e) => return (Err(e.to_string()), attempt),
            }
            seed = stable_seed(&[b"retry", &seed.to_le_bytes()]);
        }
        (Err(last), 2)
    }

    #[allow(clippy::too_many_arguments)]
    fn complete(
        &self,
        prep: &Prepared<'_>,
        measure: Option<Measure>,
        seed: u64,
        iteration: usize,
        init_seed: u64,
        masks: Vec<Vec<usize>>,
        importance: Option<Vec<ImportanceMap>>,
        start: Instant,
    ) -> Result<CachedRun, RunRecord> {
        let masked = prep.masked(&masks);
        let masked_tokens = masks.iter().map(Vec::len).sum();
        let base = RunRecord {
            measure,
            seed,
            iteration,
            ratio: prep.ratios[iteration.min(prep.ratios.len() - 1)],
            status: RunStatus::Completed,
            metric: prep.plan.metric,
            performance: None,
            test_predictions: Vec::new(),
            init_seed,
            attempts: 0,
            best_epoch: 0,
            val_loss: None,
            masked_tokens,
            checkpoint: Some("checkpoint.json".into()),
            importance: importance.as_ref().map(|_| "importance.jsonl".into()),
            masks: "masks.jsonl".into(),
            wall_time_secs: 0.0,
        };
        let (result, attempts) = self.train_with_retry(prep, init_seed, &masked);
        let model = match result {
            Ok((m, _)) => m,
            Err(reason) => {
                return Err(RunRecord {
                    status: RunStatus::Failed { reason },
                    attempts,
                    checkpoint: None,
                    wall_time_secs: start.elapsed().as_secs_f64(),
                    ..base
                })
            }
        };
        let test = &masked[prep.ranges[2].clone()];
        let preds = match model.predict(test) {
            Ok(p) => p,
            Err(e) => {
                return Err(RunRecord {
                    status: RunStatus::Failed { reason: e.to_string() },
                    attempts,
                    checkpoint: None,
                    ..base
                })
            }
        };
        let record = RunRecord {
            performance: prep.performance(&preds),
            test_predictions: preds,
            attempts,
            best_epoch: model.best_epoch,
            val_loss: model.history.get(model.best_epoch.saturating_sub(1)).map(|h| h.val_loss),
            wall_time_secs: start.elapsed().as_secs_f64(),
            ..base
        };
        Ok(CachedRun { record, checkpoint: model.params.to_checkpoint(), masks, importance })
    }

    fn shared_run(&self, prep: &Prepared<'_>, which: Shared, seed: u64) -> Arc<CachedRun> {
        let key = prep.shared_key(which, seed);
        if let Some(hit) = self.cache.lookup(&key) {
            return hit;
        }
        let start = Instant::now();
        let masks: Vec<Vec<usize>> = match which {
            Shared::Initial => vec![Vec::new(); prep.obs.len()],
            Shared::Full => prep
                .maskable
                .iter()
                .map(|m| m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect())
                .collect(),
        };
        let init_seed = stable_seed(&[b"init", &seed.to_le_bytes(), b"shared", which.name().as_bytes()]);
        let iteration = match which {
            Shared::Initial => 0,
            Shared::Full => prep.ratios.len() - 1,
        };
        match self.complete(prep, None, seed, iteration, init_seed, masks.clone(), None, start) {
            Ok(run) => self.cache.insert(&key, run.clone()).unwrap_or_else(|_| Arc::new(run)),
            // Failed runs are not cached, so a rerun tries again.
            Err(record) => Arc::new(CachedRun { record, checkpoint: ParamSet::new().to_checkpoint(), masks, importance: None }),
        }
    }

    fn failed_record(prep: &Prepared<'_>, measure: Measure, seed: u64, j: usize, reason: &str) -> RunRecord {
        RunRecord {
            measure: Some(measure),
            seed,
            iteration: j,
            ratio: prep.ratios[j],
            status: RunStatus::Failed { reason: reason.to_string() },
            metric: prep.plan.metric,
            performance: None,
            test_predictions: Vec::new(),
            init_seed: 0,
            attempts: 0,
            best_epoch: 0,
            val_loss: None,
            masked_tokens: 0,
            checkpoint: None,
            importance: None,
            masks: "masks.jsonl".into(),
            wall_time_secs: 0.0,
        }
    }

    fn chain(
        &self,
        prep: &Prepared<'_>,
        measure: Measure,
        seed: u64,
        initial: &CachedRun,
    ) -> std::io::Result<Vec<RunRecord>> {
        let plan = prep.plan;
        let mut records = Vec::with_capacity(prep.chain_end);
        let mut masks: Vec<Vec<usize>> = vec![Vec::new(); prep.obs.len()];
        let mut prev: Option<Checkpoint> = initial.record.completed().then(|| initial.checkpoint.clone());
        let mut prev_iteration = 0;
        let mut frozen: Option<Vec<ImportanceMap>> = None;
        let mut failure: Option<String> = (!initial.record.completed()).then(|| "iteration 0 failed".to_string());

        for j in 1..=prep.chain_end {
            if let Some(reason) = &failure {
                let r = Self::failed_record(prep, measure, seed, j, reason);
                self.persist(prep, &r, None)?;
                records.push(r);
                continue;
            }
            let key = prep.iteration_key(measure, seed, j);
            if let Some(hit) = self.cache.lookup(&key) {
                let mut r = hit.record.clone();
                r.metric = plan.metric;
                r.performance = prep.performance(&r.test_predictions);
                masks = hit.masks.clone();
                prev = Some(hit.checkpoint.clone());
                prev_iteration = j;
                self.persist(prep, &r, Some(&hit))?;
                records.push(r);
                continue;
            }
            let start = Instant::now();
            let maps = match self.importance_for(prep, measure, seed, &masks, prev.as_ref(), prev_iteration, &mut frozen, initial) {
                Ok(m) => m,
                Err(reason) => {
                    failure = Some(reason.clone());
                    let r = Self::failed_record(prep, measure, seed, j, &reason);
                    self.persist(prep, &r, None)?;
                    records.push(r);
                    continue;
                }
            };
            let mut next = Vec::with_capacity(masks.len());
            for (i, map) in maps.iter().enumerate() {
                let m = prep.maskable[i].iter().filter(|&&b| b).count();
                let target = plan.schedule.cumulative_target(j, m);
                let st = MaskState { masked: masks[i].clone(), iteration: j - 1, target: masks[i].len(), saturated: false };
                let new = extend_mask(&st, &map.scores, &prep.maskable[i], target, plan.ranking)
                    .expect("targets are monotone and maps aligned");
                next.push(new.masked);
            }
            let init_seed = stable_seed(&[b"init", &seed.to_le_bytes(), measure.name().as_bytes(), &(j as u64).to_le_bytes()]);
            match self.complete(prep, Some(measure), seed, j, init_seed, next, Some(maps), start) {
                Ok(run) => {
                    masks = run.masks.clone();
                    prev = Some(run.checkpoint.clone());
                    prev_iteration = j;
                    self.persist(prep, &run.record, Some(&run))?;
                    records.push(run.record.clone());
                    self.cache.insert(&key, run)?;
                }
                Err(record) => {
                    failure = Some(format!("iteration {j} failed"));
                    self.persist(prep, &record, None)?;
                    records.push(record);
                }
            }
        }
        Ok(records)
    }

    fn persist(&self, prep: &Prepared<'_>, record: &RunRecord, run: Option<&CachedRun>) -> std::io::Result<()> {
        let Some(store) = &self.store else { return Ok(()) };
        let ckpt = run.filter(|_| record.completed()).map(|r| &r.checkpoint);
        let maps = run.and_then(|r| r.importance.as_deref());
        let masks = run.map(|r| r.masks.as_slice()).unwrap_or(&[]);
        store.write(&prep.plan_hash, record, ckpt, maps, masks)
    }

    #[allow(clippy::too_many_arguments)]
    fn importance_for(
        &self,
        prep: &Prepared<'_>,
        measure: Measure,
        seed: u64,
        masks: &[Vec<usize>],
        prev: Option<&Checkpoint>,
        prev_iteration: usize,
        frozen: &mut Option<Vec<ImportanceMap>>,
        initial: &CachedRun,
    ) -> Result<Vec<ImportanceMap>, String> {
        let plan = prep.plan;
        let compute = |ckpt: &Checkpoint, iteration: usize, obs: &[Observation]| -> Result<Vec<ImportanceMap>, String> {
            let model = if measure.uses_model() { Some(prep.model_for(ckpt)?) } else { None };
            let ctx = Context { model: model.as_ref(), seed, iteration, ig_steps: plan.ig_steps };
            importance::compute(measure, &ctx, obs, &prep.ids).map_err(|e| e.to_string())
        };
        match plan.mode {
            RoarMode::Recursive => {
                let ckpt = prev.ok_or("previous model missing")?;
                compute(ckpt, prev_iteration, &prep.masked(masks))
            }
            RoarMode::Classic => {
                if frozen.is_none() {
                    let unmasked: Vec<Observation> = prep.obs.iter().map(|o| (*o).clone()).collect();
                    *frozen = Some(compute(&initial.checkpoint, 0, &unmasked)?);
                }
                Ok(frozen.clone().expect("frozen maps"))
            }
        }
    }
}
