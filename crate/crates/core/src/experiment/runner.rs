//! Executes an experiment into a run store, resuming where a previous
//! execution stopped.
//!
//! Each run is journaled to its own file while it executes. Finished runs
//! are appended to the store strictly in run order by a single committer,
//! so the store content does not depend on thread scheduling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use super::config::ExperimentConfig;
use super::manifest::Manifest;
use super::store::{read_store, StoreRecord, CONFIG_COPY, STORE_FILE, STORE_SCHEMA};
use super::{sha256_hex, ExperimentError, TOOL_VERSION};
use crate::agents::templates::template_hash;
use crate::agents::{
    sample_population, Agent, AgentKind, AgentSpec, HillClimbAgent, LlmAgent, LlmSetup, LocalSearchAgent, Observable,
    Quiz, RandomAgent, ReplayAgent,
};
use crate::annotate::Lexicon;
use crate::game::{GameState, LandscapeRef, RunStatus};
use crate::landscape::{Configuration, Landscape};
use crate::llm_client::{
    ChatProvider, HttpProvider, Limiter, LlmClient, ProviderKind, Rubric, ScriptedProvider, SimulatedParticipant,
};
use crate::rng;

const JOURNAL_DIR: &str = "journal";

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub planned: usize,
    /// Runs already in the store before this execution.
    pub skipped: usize,
    /// Runs committed by this execution (executed or recovered from a
    /// finished journal).
    pub committed: usize,
    pub aborted: Vec<String>,
    pub store_dir: PathBuf,
}

#[derive(Clone, Debug)]
struct Job {
    run_id: String,
    k: usize,
    index: usize,
    spec: AgentSpec,
}

fn plan(cfg: &ExperimentConfig) -> Result<Vec<Job>, ExperimentError> {
    let mut jobs = Vec::new();
    for &k in &cfg.landscape.k {
        let specs = sample_population(&cfg.population, rng::derive(cfg.master_seed, &[k as u64]))?;
        for (index, spec) in specs.into_iter().enumerate() {
            jobs.push(Job { run_id: format!("{}-k{k}-{index:04}", cfg.name), k, index, spec });
        }
    }
    Ok(jobs)
}

pub(crate) fn fixture_hashes() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("templates".to_string(), template_hash()),
        ("quiz".to_string(), Quiz::default().hash()),
        ("lexicon".to_string(), Lexicon::default().hash().to_string()),
        ("rubric".to_string(), Rubric::default().hash()),
    ])
}

struct Journal {
    out: BufWriter<File>,
    path: PathBuf,
}

impl Journal {
    fn create(path: PathBuf) -> Result<Self, ExperimentError> {
        let f = File::create(&path).map_err(ExperimentError::io(&path))?;
        Ok(Self { out: BufWriter::new(f), path })
    }

    fn write(&mut self, rec: &StoreRecord) -> Result<(), ExperimentError> {
        self.out.write_all(rec.to_line().as_bytes()).map_err(ExperimentError::io(&self.path))?;
        self.out.flush().map_err(ExperimentError::io(&self.path))
    }

    fn finish(self) -> Result<(), ExperimentError> {
        let f = self.out.into_inner().map_err(|e| ExperimentError::Io { path: self.path.clone(), source: e.into_error() })?;
        f.sync_all().map_err(ExperimentError::io(&self.path))
    }
}

/// True when a journal holds a closed block.
fn journal_complete(path: &Path) -> bool {
    fs::read_to_string(path).ok().and_then(|t| t.lines().last().map(|l| l.contains("\"type\":\"run_end\""))).unwrap_or(false)
}

enum Player {
    Llm(Box<LlmAgent>),
    Other(Box<dyn Agent>),
}

impl Player {
    fn agent(&mut self) -> &mut dyn Agent {
        match self {
            Player::Llm(a) => a.as_mut(),
            Player::Other(a) => a.as_mut(),
        }
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    landscapes: HashMap<usize, Landscape>,
    limiter: Arc<Limiter>,
    http: HashMap<String, Arc<dyn ChatProvider>>,
    quiz: Quiz,
    journal_dir: PathBuf,
}

impl Context<'_> {
    fn player(&self, job: &Job) -> Result<(Player, Option<Configuration>), ExperimentError> {
        let spec = &job.spec;
        Ok(match spec.kind {
            AgentKind::Llm => {
                let pcfg = self.cfg.providers[&spec.model_label].clone();
                let provider: Arc<dyn ChatProvider> = match pcfg.kind {
                    ProviderKind::Openai => self.http[&spec.model_label].clone(),
                    ProviderKind::Mock => Arc::new(SimulatedParticipant::new(
                        rng::derive(pcfg.mock_seed, &[spec.agent_seed]),
                        self.cfg.landscape.n,
                        self.quiz.key(),
                    )),
                    ProviderKind::Script => {
                        Arc::new(ScriptedProvider::from_file(Path::new(pcfg.script_path.as_deref().unwrap_or_default()))?)
                    }
                };
                let setup = LlmSetup {
                    framing: self.cfg.framing,
                    think_aloud: self.cfg.think_aloud,
                    objective: self.cfg.objective,
                    trials: self.cfg.trials,
                    n: self.cfg.landscape.n,
                };
                let client = LlmClient::new(provider, self.limiter.clone());
                (Player::Llm(Box::new(LlmAgent::new(spec, client, pcfg, &setup))), None)
            }
            AgentKind::LocalSearch => (Player::Other(Box::new(LocalSearchAgent::new(spec))), None),
            AgentKind::HillClimb => (Player::Other(Box::new(HillClimbAgent::new(spec))), None),
            AgentKind::Random => (Player::Other(Box::new(RandomAgent::new(spec))), None),
            AgentKind::Replay => {
                let src = spec.params.replay_from.as_ref().expect("validated");
                let store = read_store(Path::new(&src.store))?;
                let run = store
                    .runs
                    .iter()
                    .find(|r| r.record.run_id == src.run_id)
                    .ok_or_else(|| ExperimentError::Config(format!("replay source {} not found in {}", src.run_id, src.store)))?;
                if run.record.landscape.n != self.cfg.landscape.n {
                    return Err(ExperimentError::Config(format!("replay source {} has n = {}", src.run_id, run.record.landscape.n)));
                }
                (Player::Other(Box::new(ReplayAgent::from_run(&run.record))), Some(run.record.start_config.clone()))
            }
        })
    }

    fn journal_path(&self, job: &Job) -> PathBuf {
        self.journal_dir.join(format!("{}.jsonl", job.run_id))
    }

    /// Plays one run into its journal.
    fn execute(&self, job: &Job) -> Result<(), ExperimentError> {
        let cfg = self.cfg;
        let landscape = &self.landscapes[&job.k];
        let (mut player, start) = self.player(job)?;
        let mut game = match start {
            Some(s) => GameState::with_start(landscape, s, cfg.trials)?,
            None => GameState::new(landscape, rng::derive(cfg.master_seed, &[job.k as u64, job.index as u64]), cfg.trials)?,
        };
        let run_id = job.run_id.clone();
        let mut j = Journal::create(self.journal_path(job))?;
        j.write(&StoreRecord::RunStart {
            run_id: run_id.clone(),
            agent: job.spec.clone(),
            population: job.spec.population_label(),
            landscape: LandscapeRef::of(landscape),
            start_config: game.start_config().clone(),
            start_payoff: game.start_payoff(),
            planned_trials: cfg.trials,
            objective: cfg.objective,
        })?;
        let mut end = (RunStatus::Complete, None);
        if let Player::Llm(agent) = &mut player {
            if cfg.quiz {
                let retest = job.spec.params.quiz_retest.unwrap_or(cfg.quiz_retest);
                let outcome = agent.run_comprehension_test(&self.quiz, retest);
                for exchange in agent.take_exchanges() {
                    j.write(&StoreRecord::Exchange { run_id: run_id.clone(), exchange })?;
                }
                match outcome {
                    Ok(outcome) => j.write(&StoreRecord::Quiz { run_id: run_id.clone(), outcome })?,
                    Err(e) => end = (e.abort_status(), Some(e.to_string())),
                }
            }
        }
        while end.0 == RunStatus::Complete && !game.is_closed() {
            let result = player.agent().next_move(&Observable::of(&game, cfg.objective));
            for exchange in player.agent().take_exchanges() {
                j.write(&StoreRecord::Exchange { run_id: run_id.clone(), exchange })?;
            }
            match result {
                Ok(action) => {
                    game.submit(action.config, action.raw_text)?;
                    let record = game.history().last().expect("just submitted").clone();
                    j.write(&StoreRecord::Trial { run_id: run_id.clone(), record })?;
                }
                Err(e) => end = (e.abort_status(), Some(e.to_string())),
            }
        }
        j.write(&StoreRecord::RunEnd { run_id, status: end.0, error: end.1 })?;
        j.finish()
    }
}

fn append_block(store: &Path, block: &[u8]) -> Result<(), ExperimentError> {
    let mut f = OpenOptions::new().append(true).open(store).map_err(ExperimentError::io(store))?;
    f.write_all(block).map_err(ExperimentError::io(store))?;
    f.sync_all().map_err(ExperimentError::io(store))
}

/// Opens (or creates) the store, repairs a torn tail and returns the
/// manifest plus the ids already committed.
fn open_store(cfg: &ExperimentConfig, dir: &Path, planned: usize) -> Result<(Manifest, HashSet<String>), ExperimentError> {
    let hash = cfg.hash();
    let store_path = dir.join(STORE_FILE);
    let config_path = dir.join(CONFIG_COPY);
    if config_path.exists() {
        let previous = ExperimentConfig::load(&config_path)?;
        if previous.hash() != hash {
            return Err(ExperimentError::Integrity(format!(
                "{} was created with a different configuration (hash {}); use a new output directory",
                dir.display(),
                previous.hash()
            )));
        }
    } else {
        fs::write(&config_path, cfg.to_toml()).map_err(ExperimentError::io(&config_path))?;
    }
    if !store_path.exists() || fs::metadata(&store_path).map_err(ExperimentError::io(&store_path))?.len() == 0 {
        let header = StoreRecord::Header {
            schema_version: STORE_SCHEMA,
            experiment: cfg.name.clone(),
            config_hash: hash.clone(),
            tool_version: TOOL_VERSION.into(),
        };
        fs::write(&store_path, header.to_line()).map_err(ExperimentError::io(&store_path))?;
        let mut m = Manifest::new(&cfg.name, &hash, fixture_hashes(), planned);
        m.save(dir)?;
        return Ok((m, HashSet::new()));
    }
    let store = read_store(dir)?;
    if store.config_hash() != Some(hash.as_str()) || store.is_mixed() {
        return Err(ExperimentError::Integrity(format!("{} holds runs of a different configuration", store_path.display())));
    }
    if store.trailing_bytes > 0 {
        let f = OpenOptions::new().write(true).open(&store_path).map_err(ExperimentError::io(&store_path))?;
        f.set_len(store.valid_len).map_err(ExperimentError::io(&store_path))?;
        f.sync_all().map_err(ExperimentError::io(&store_path))?;
    }
    let mut manifest = match Manifest::load(dir) {
        Ok(m) => m,
        Err(ExperimentError::Io { .. }) => Manifest::new(&cfg.name, &hash, fixture_hashes(), planned),
        Err(e) => return Err(e),
    };
    if manifest.config_hash != hash {
        return Err(ExperimentError::Integrity("manifest belongs to a different configuration".into()));
    }
    manifest.reconcile(&store)?;
    manifest.finished_at = None;
    manifest.save(dir)?;
    Ok((manifest, store.runs.iter().map(|r| r.record.run_id.clone()).collect()))
}

/// Runs every planned (K, agent) pair that is not yet in the store under
/// `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, ExperimentError> {
    cfg.validate()?;
    let jobs = plan(cfg)?;
    fs::create_dir_all(out_dir).map_err(ExperimentError::io(out_dir))?;
    let journal_dir = out_dir.join(JOURNAL_DIR);
    fs::create_dir_all(&journal_dir).map_err(ExperimentError::io(&journal_dir))?;
    let (mut manifest, done) = open_store(cfg, out_dir, jobs.len())?;
    let skipped = done.len();
    let pending: Vec<Job> = jobs.iter().filter(|j| !done.contains(&j.run_id)).cloned().collect();

    let mut http: HashMap<String, Arc<dyn ChatProvider>> = HashMap::new();
    for (label, p) in &cfg.providers {
        if p.kind == ProviderKind::Openai {
            http.insert(label.clone(), Arc::new(HttpProvider::from_config(p)?));
        }
    }
    let mut landscapes = HashMap::new();
    for &k in &cfg.landscape.k {
        landscapes.insert(k, Landscape::generate(cfg.landscape.n, k, cfg.landscape.seed)?);
    }
    let ctx = Context {
        cfg,
        landscapes,
        limiter: Arc::new(Limiter::new(cfg.parallelism)),
        http,
        quiz: Quiz::default(),
        journal_dir,
    };

    // journals of runs that finished before a crash are committed as they
    // are; partial ones are discarded and rerun
    let mut ready = vec![false; pending.len()];
    for (i, job) in pending.iter().enumerate() {
        let path = ctx.journal_path(job);
        if journal_complete(&path) {
            ready[i] = true;
        } else if path.exists() {
            fs::remove_file(&path).map_err(ExperimentError::io(&path))?;
        }
    }
    let to_run: Vec<usize> = (0..pending.len()).filter(|&i| !ready[i]).collect();
    let store_path = out_dir.join(STORE_FILE);
    let mut aborted = Vec::new();
    let mut next = 0;
    let mut commit_ready = |ready: &[bool], next: &mut usize, manifest: &mut Manifest| -> Result<(), ExperimentError> {
        while *next < pending.len() && ready[*next] {
            let job = &pending[*next];
            let path = ctx.journal_path(job);
            let block = fs::read(&path).map_err(ExperimentError::io(&path))?;
            append_block(&store_path, &block)?;
            let text = String::from_utf8_lossy(&block);
            let last: StoreRecord = serde_json::from_str(text.lines().last().unwrap_or_default())
                .map_err(|e| ExperimentError::Format { path: path.clone(), line: text.lines().count(), message: e.to_string() })?;
            let status = match last {
                StoreRecord::RunEnd { status, .. } => status,
                _ => return Err(ExperimentError::Integrity(format!("journal {} is not closed", path.display()))),
            };
            let trials = text.lines().filter(|l| l.contains("\"type\":\"trial\"")).count();
            manifest.append(&job.run_id, status, trials, &sha256_hex(&block));
            manifest.save(out_dir)?;
            fs::remove_file(&path).map_err(ExperimentError::io(&path))?;
            if status != RunStatus::Complete {
                aborted.push(job.run_id.clone());
            }
            *next += 1;
        }
        Ok(())
    };
    commit_ready(&ready, &mut next, &mut manifest)?;

    let cursor = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = cfg.parallelism.min(to_run.len()).max(1);
    let (tx, rx) = mpsc::channel::<(usize, Result<(), ExperimentError>)>();
    let mut failure = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (ctx, cursor, stop, to_run, pending) = (&ctx, &cursor, &stop, &to_run, &pending);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let slot = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = to_run.get(slot) else { break };
                if tx.send((i, ctx.execute(&pending[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            match result {
                Ok(()) => {
                    ready[i] = true;
                    if let Err(e) = commit_ready(&ready, &mut next, &mut manifest) {
                        stop.store(true, Ordering::SeqCst);
                        failure.get_or_insert(e);
                    }
                }
                Err(e) => {
                    stop.store(true, Ordering::SeqCst);
                    failure.get_or_insert(e);
                }
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    manifest.finished_at = Some(super::manifest::now());
    manifest.save(out_dir)?;
    Ok(RunSummary { planned: jobs.len(), skipped, committed: next, aborted, store_dir: out_dir.to_path_buf() })
}
