//! Command-line front end. [`run_command`] parses arguments, runs one
//! subcommand and returns the process exit code: 0 on success, 1 when the
//! work itself fails, 2 for bad usage.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::baselines::Rule;
use crate::commonsense::{
    build_representation, extend_vocabulary, warm_cache, ClientConfig, CommonsenseError, CompletionClient,
    HttpCompletionClient, RecordingClient, ScoreCache, ScoredRepresentation, Scorer, ScoringMode, TranscriptReplay,
};
use crate::dataio::{
    generate_synthetic_persona, load_persona, noisy_cache_entries, save_persona, write_report, DataError,
    PersonaDataset, PersonaTask, SyntheticShape, SyntheticSpec,
};
use crate::domain::{
    norm_key, parse_adaptation_label, validate_task, ComponentType, DomainError, ExplanationItem, FeedbackSample,
    StateConstraint, StateSpace, StateVector, TaskDescription,
};
use crate::embedding::{load_embedding_table, EmbeddingError, EmbeddingProvider, FallbackEmbedder, TableEmbedder};
use crate::evaluation::{run_conditions, Condition, EvalConfig, EvalError, EvalResources};
use crate::neuralnet::AdamConfig;
use crate::personalization::{
    load_checkpoint, save_checkpoint, train, CheckpointError, ModelError, TokenRef, TrainConfig, Tokenization,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Commonsense(#[from] CommonsenseError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "taaco", version, about = "Learn how a user wants household tasks handled from a few examples")]
pub struct CliConfig {
    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the concept-score cache for every task of a persona
    Score {
        #[arg(long)]
        persona: PathBuf,
        #[command(flatten)]
        scoring: ScoringArgs,
    },
    /// Train a model on a persona and write a checkpoint
    Train {
        #[arg(long)]
        persona: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Predict the adaptation for one task in one state
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Persona whose vocabulary the prediction must use
        #[arg(long)]
        persona: Option<PathBuf>,
        /// JSON file with the task fields and an optional "state" object
        #[arg(long, conflicts_with_all = ["action", "activity"])]
        query: Option<PathBuf>,
        #[arg(long)]
        action: Option<String>,
        #[arg(long)]
        activity: Option<String>,
        #[arg(long = "object")]
        objects: Vec<String>,
        #[arg(long = "location")]
        locations: Vec<String>,
        /// State variables that are true (comma separated); the rest are false
        #[arg(long, value_delimiter = ',')]
        active: Vec<String>,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[command(flatten)]
        embedding: EmbeddingArgs,
    },
    /// Cross-validated feedback curves, baselines and ablations
    Evaluate {
        #[arg(long)]
        persona: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "taaco,oracle,rules")]
        conditions: Vec<Condition>,
        /// Concrete states evaluated per held-out feedback sample
        #[arg(long, default_value_t = 4)]
        eval_states: usize,
        /// Report file (JSON)
        #[arg(long)]
        out: PathBuf,
        /// Also write a tab-separated summary here
        #[arg(long)]
        table: Option<PathBuf>,
        /// Replay few-shot answers for the llm condition from this transcript
        #[arg(long)]
        llm_transcript: Option<PathBuf>,
        /// Query the live endpoint for the llm condition (recorded to --llm-record)
        #[arg(long)]
        llm_live: bool,
        #[arg(long)]
        llm_record: Option<PathBuf>,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Generate a synthetic persona and its score cache
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Score cache to write (truth table, plus noisy copy if --noise > 0)
        #[arg(long)]
        cache_out: PathBuf,
        #[arg(long, default_value_t = 60)]
        tasks: usize,
        #[arg(long, default_value_t = 6)]
        rules: usize,
        #[arg(long, default_value_t = 0.15)]
        noise: f64,
    },
    /// Answer questions about new tasks and grow a persona file
    Teach {
        #[arg(long)]
        persona: PathBuf,
        /// JSON list of tasks to ask about
        #[arg(long)]
        tasks: PathBuf,
        /// Show this model's guess before each question
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Retrain after the session and write the checkpoint here
        #[arg(long)]
        retrain: Option<PathBuf>,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[command(flatten)]
        hyper: HyperArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerMode {
    /// Only use cached scores
    Replay,
    /// Ask the language model for missing scores
    Live,
}

#[derive(Debug, Clone, Args)]
pub struct ScoringArgs {
    /// Concept-score cache (JSON lines)
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScorerMode::Replay)]
    pub scorer_mode: ScorerMode,
    /// Identifies whose scores to use from the cache
    #[arg(long, default_value = "gpt-4")]
    pub scorer_id: String,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub llm_model: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub max_concurrent: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EmbeddingArgs {
    /// Tab-separated table of sentence embeddings
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Fail on texts missing from the table instead of hashing them
    #[arg(long)]
    pub strict_embeddings: bool,
    /// Dimension of hashed embeddings when no table is given
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Full-size model and schedule
    Paper,
    /// Small model for quick experiments
    Compact,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long, value_enum, default_value_t = Profile::Paper)]
    pub profile: Profile,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub n_aug: Option<usize>,
    #[arg(long)]
    pub model_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn_dim: Option<usize>,
    /// Feed component texts instead of concept rows
    #[arg(long)]
    pub no_concepts: bool,
}

impl HyperArgs {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut c = match self.profile {
            Profile::Paper => TrainConfig::default(),
            Profile::Compact => TrainConfig::compact(),
        };
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.lr {
            c.adam = AdamConfig { learning_rate: v, ..c.adam };
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.n_aug {
            c.n_aug = v;
        }
        if let Some(v) = self.model_dim {
            c.model.embed_dim = v;
        }
        if let Some(v) = self.layers {
            c.model.layers = v;
        }
        if let Some(v) = self.heads {
            c.model.heads = v;
        }
        if let Some(v) = self.ffn_dim {
            c.model.ffn_dim = v;
        }
        if self.no_concepts {
            c.tokenization = Tokenization::Components;
        }
        c.with_seed(seed)
    }
}

/// Cache plus scorer for the chosen mode.
fn scoring(args: &ScoringArgs) -> Result<(Scorer, ScoreCache), CliError> {
    match args.scorer_mode {
        ScorerMode::Replay => {
            let path = args
                .cache
                .as_ref()
                .ok_or_else(|| CliError::Usage("replay scoring needs --cache".into()))?;
            Ok((Scorer::replay(&args.scorer_id), ScoreCache::load(path)?))
        }
        ScorerMode::Live => {
            let client = HttpCompletionClient::new(client_config(args));
            let cache = match &args.cache {
                Some(p) => ScoreCache::open(p)?,
                None => ScoreCache::in_memory(),
            };
            Ok((Scorer::live(&args.scorer_id, Arc::new(client), ScoringMode::Strict), cache))
        }
    }
}

fn client_config(args: &ScoringArgs) -> ClientConfig {
    let mut config = ClientConfig { max_concurrent: args.max_concurrent.max(1), ..ClientConfig::default() };
    if let Some(e) = &args.endpoint {
        config.endpoint = e.clone();
    }
    if let Some(m) = &args.llm_model {
        config.model = m.clone();
    }
    config
}

fn embedder(args: &EmbeddingArgs) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    Ok(match &args.embeddings {
        Some(path) => {
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Box::new(TableEmbedder::new(load_embedding_table(path)?, &name, args.strict_embeddings, 0))
        }
        None => Box::new(FallbackEmbedder::new(0, args.embed_dim)),
    })
}

fn representations(
    persona: &PersonaDataset,
    scorer: &Scorer,
    cache: &ScoreCache,
) -> Result<Vec<(FeedbackSample, ScoredRepresentation)>, CliError> {
    persona
        .samples()
        .into_iter()
        .map(|s| {
            let rep = build_representation(&s.task, &persona.vocabulary, scorer, cache)?;
            Ok((s, rep))
        })
        .collect()
}

/// "<component> is a/an <type-word> which <concept>", or the state variable.
pub fn render_explanation(e: &TokenRef) -> String {
    fn article(word: &str) -> &'static str {
        if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
            "an"
        } else {
            "a"
        }
    }
    match e {
        TokenRef::Concept { component, component_type, concept } => {
            let w = component_type.type_word();
            format!("{component} is {} {w} which {concept}", article(w))
        }
        TokenRef::Component { component, component_type } => {
            let w = component_type.type_word();
            format!("{component} is {} {w} in this task", article(w))
        }
        TokenRef::State { state_variable } => state_variable.clone(),
    }
}

/// Same wording as the rule baseline uses for its citations.
pub fn render_rule(rule: &Rule) -> String {
    rule.describe()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Query {
    #[serde(default = "query_id")]
    id: String,
    action: String,
    activity: String,
    #[serde(default)]
    objects: Vec<String>,
    #[serde(default)]
    locations: Vec<String>,
    #[serde(default)]
    state: BTreeMap<String, bool>,
}

fn query_id() -> String {
    "query".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskEntry {
    id: String,
    action: String,
    activity: String,
    #[serde(default)]
    objects: Vec<String>,
    #[serde(default)]
    locations: Vec<String>,
}

fn task_from(id: String, action: String, activity: String, objects: &[String], locations: &[String]) -> TaskDescription {
    let o: Vec<&str> = objects.iter().map(String::as_str).collect();
    let l: Vec<&str> = locations.iter().map(String::as_str).collect();
    TaskDescription::new(id, action, activity, &o, &l)
}

fn state_from(space: &StateSpace, bindings: &BTreeMap<String, bool>) -> Result<StateVector, CliError> {
    let mut values = vec![false; space.len()];
    for (name, v) in bindings {
        values[space.require(name)?] = *v;
    }
    Ok(StateVector::new(values))
}

/// Runs one command line (including the program name) with the given
/// streams. `input` only matters for `teach`.
pub fn run_with_io<I, T>(argv: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match CliConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli, input, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command line against the process's standard streams.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    run_with_io(argv, &mut input, &mut std::io::stdout(), &mut std::io::stderr())
}

fn dispatch(cli: CliConfig, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Score { persona, scoring: s } => {
            let persona = load_persona(&persona)?;
            let (scorer, cache) = scoring(&s)?;
            let added =
                warm_cache(&persona.task_descriptions(), &persona.vocabulary, &scorer, &cache, s.max_concurrent)?;
            writeln!(out, "{added} new scores ({} cached, {} requests)", cache.len(), scorer.client_calls())?;
        }
        Command::Train { persona, out: path, scoring: s, embedding, hyper } => {
            let persona = load_persona(&persona)?;
            let (scorer, cache) = scoring(&s)?;
            let embedder = embedder(&embedding)?;
            let data = representations(&persona, &scorer, &cache)?;
            let cfg = hyper.train_config(seed);
            let outcome = train(&data, &persona.state_space, &persona.vocabulary, embedder.as_ref(), &cfg)?;
            save_checkpoint(&outcome.model, &path)?;
            let last = outcome.loss_history.last().copied().unwrap_or(f64::NAN);
            writeln!(out, "trained on {} samples, final loss {last:.4}, wrote {}", data.len(), path.display())?;
        }
        Command::Predict { checkpoint, persona, query, action, activity, objects, locations, active, scoring: s, embedding } => {
            let trained = load_checkpoint(&checkpoint)?;
            let vocab = match &persona {
                Some(p) => load_persona(p)?.vocabulary,
                None => trained.vocabulary.clone(),
            };
            let space = trained.state_space.clone();
            let (task, state) = match query {
                Some(path) => {
                    let q: Query = serde_json::from_str(&std::fs::read_to_string(&path)?)
                        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                    let state = state_from(&space, &q.state)?;
                    (task_from(q.id, q.action, q.activity, &q.objects, &q.locations), state)
                }
                None => {
                    let (Some(action), Some(activity)) = (action, activity) else {
                        return Err(CliError::Usage("predict needs --query or both --action and --activity".into()));
                    };
                    let bindings: BTreeMap<String, bool> = active.into_iter().map(|v| (v, true)).collect();
                    (task_from("query".into(), action, activity, &objects, &locations), state_from(&space, &bindings)?)
                }
            };
            let task = validate_task(&task)?;
            let (scorer, cache) = scoring(&s)?;
            let embedder = embedder(&embedding)?;
            let p = trained.predict(&task, &state, &vocab, &scorer, &cache, embedder.as_ref())?;
            writeln!(out, "{}", p.label)?;
            writeln!(out, "because {} (p = {:.3})", render_explanation(&p.explanation), p.explanation_probability)?;
        }
        Command::Evaluate {
            persona,
            sizes,
            k,
            conditions,
            eval_states,
            out: path,
            table,
            llm_transcript,
            llm_live,
            llm_record,
            scoring: s,
            embedding,
            hyper,
        } => {
            let persona = load_persona(&persona)?;
            let (scorer, cache) = scoring(&s)?;
            let embedder = embedder(&embedding)?;
            let llm: Option<Box<dyn CompletionClient>> = match (llm_transcript, llm_live) {
                (Some(_), true) => return Err(CliError::Usage("use either --llm-transcript or --llm-live".into())),
                (Some(t), false) => Some(Box::new(TranscriptReplay::load(&t)?)),
                (None, true) => {
                    let live = HttpCompletionClient::new(client_config(&s));
                    match llm_record {
                        Some(r) => Some(Box::new(RecordingClient::new(live, &r)?)),
                        None => Some(Box::new(live)),
                    }
                }
                (None, false) => None,
            };
            if conditions.contains(&Condition::Llm) && llm.is_none() {
                return Err(CliError::Usage("the llm condition needs --llm-transcript or --llm-live".into()));
            }
            let config = EvalConfig { sizes, folds: k, seed, eval_states, train: hyper.train_config(seed), threads: 0 };
            let res = EvalResources {
                scorer: &scorer,
                cache: &cache,
                embedder: embedder.as_ref(),
                llm: llm.as_deref(),
            };
            let report = run_conditions(&persona, &conditions, &res, &config)?;
            write_report(&report, &path)?;
            let text = report.to_table();
            if let Some(t) = table {
                std::fs::write(t, &text)?;
            }
            write!(out, "{text}")?;
        }
        Command::Synth { out: path, cache_out, tasks, rules, noise } => {
            if !(0.0..=1.0).contains(&noise) {
                return Err(CliError::Usage(format!("--noise must be within [0, 1], got {noise}")));
            }
            let shape = SyntheticShape {
                tasks,
                rules,
                state_conditioned_rules: SyntheticShape::default().state_conditioned_rules.min(rules),
                ..SyntheticShape::default()
            };
            let synthetic = generate_synthetic_persona(&SyntheticSpec::sample(seed, &shape));
            let mut entries = synthetic.oracle_cache.clone();
            if noise > 0.0 {
                entries.extend(noisy_cache_entries(&synthetic.spec, noise, seed));
            }
            save_persona(&synthetic.dataset, &path)?;
            ScoreCache::from_entries(entries).write_all(&cache_out)?;
            writeln!(
                out,
                "wrote {} tasks / {} feedback samples to {}",
                synthetic.dataset.tasks.len(),
                synthetic.dataset.sample_count(),
                path.display()
            )?;
        }
        Command::Teach { persona: persona_path, tasks, checkpoint, retrain, scoring: s, embedding, hyper } => {
            let mut persona = load_persona(&persona_path)?;
            let entries: Vec<TaskEntry> = serde_json::from_str(&std::fs::read_to_string(&tasks)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", tasks.display())))?;
            let candidates = entries
                .into_iter()
                .map(|t| validate_task(&task_from(t.id, t.action, t.activity, &t.objects, &t.locations)))
                .collect::<Result<Vec<_>, _>>()?;
            let embedder = embedder(&embedding)?;
            let guesser = match &checkpoint {
                Some(c) => Some((load_checkpoint(c)?, scoring(&s)?)),
                None => None,
            };
            let mut session = TeachSession { persona: &mut persona, path: &persona_path, input, out };
            for task in &candidates {
                if let Some((trained, (scorer, cache))) = &guesser {
                    let state = StateVector::all_false(&trained.state_space);
                    match trained.predict(task, &state, &trained.vocabulary, scorer, cache, embedder.as_ref()) {
                        Ok(p) => writeln!(
                            session.out,
                            "(current guess with nothing else going on: {}, because {})",
                            p.label,
                            render_explanation(&p.explanation)
                        )?,
                        Err(e) => writeln!(session.out, "(no guess: {e})")?,
                    }
                }
                if !session.ask(task)? {
                    break;
                }
            }
            if let Some(ckpt) = retrain {
                let (scorer, cache) = scoring(&s)?;
                let data = representations(&persona, &scorer, &cache)?;
                let cfg = hyper.train_config(seed);
                let outcome = train(&data, &persona.state_space, &persona.vocabulary, embedder.as_ref(), &cfg)?;
                save_checkpoint(&outcome.model, &ckpt)?;
                writeln!(out, "retrained on {} samples, wrote {}", data.len(), ckpt.display())?;
            }
        }
    }
    Ok(())
}

struct TeachSession<'a> {
    persona: &'a mut PersonaDataset,
    path: &'a Path,
    input: &'a mut dyn BufRead,
    out: &'a mut dyn Write,
}

enum Answer<T> {
    Value(T),
    Quit,
}

impl TeachSession<'_> {
    /// Prompts until `parse` accepts the line; `None` at end of input.
    fn prompt<T>(
        &mut self,
        question: &str,
        mut parse: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<Answer<T>, CliError> {
        loop {
            write!(self.out, "{question} ")?;
            self.out.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                writeln!(self.out)?;
                return Ok(Answer::Quit);
            }
            let line = line.trim();
            if line.eq_ignore_ascii_case("q") || line.eq_ignore_ascii_case("quit") {
                return Ok(Answer::Quit);
            }
            match parse(line) {
                Ok(v) => return Ok(Answer::Value(v)),
                Err(msg) => writeln!(self.out, "  {msg}")?,
            }
        }
    }

    /// Asks about one task. Returns false when the user quits.
    fn ask(&mut self, task: &TaskDescription) -> Result<bool, CliError> {
        writeln!(self.out, "\nTask {}: {}", task.id, task.action)?;
        writeln!(
            self.out,
            "  activity: {}; objects: {}; locations: {}",
            task.activity,
            task.objects.join(", "),
            task.locations.join(", ")
        )?;
        let space = self.persona.state_space.clone();
        loop {
            let Answer::Value(label) = self.prompt("How should the robot respond? [do_now/do_later/remind/no_action, s = skip, q = quit]", |l| {
                if l.eq_ignore_ascii_case("s") {
                    return Ok(None);
                }
                parse_adaptation_label(l).map(Some).map_err(|e| e.to_string())
            })?
            else {
                return Ok(false);
            };
            let Some(label) = label else { return Ok(true) };
            let Answer::Value(constraint) =
                self.prompt("Only when? (e.g. weekend=true, guests_present=false; blank = always)", |l| {
                    parse_constraint(l, &space)
                })?
            else {
                return Ok(false);
            };
            let Answer::Value(explanation) =
                self.prompt("Why? (e.g. \"stove: involves an open flame; weekend\"; blank = skip)", |l| {
                    parse_explanation(l, task, &space)
                })?
            else {
                return Ok(false);
            };
            let mut sample = FeedbackSample::new(task.clone(), label);
            if let Some(c) = constraint {
                sample = sample.with_constraint(c);
            }
            if let Some(e) = explanation {
                sample = sample.with_explanation(e);
            }
            if let Err(e) = sample.validate(&space) {
                writeln!(self.out, "  {e}; let's try that task again")?;
                continue;
            }
            self.record(sample)?;
            writeln!(self.out, "  saved")?;
            return Ok(true);
        }
    }

    fn record(&mut self, sample: FeedbackSample) -> Result<(), CliError> {
        let (vocab, added) = extend_vocabulary(&self.persona.vocabulary, std::slice::from_ref(&sample));
        match self.persona.tasks.iter_mut().find(|t| t.task.id == sample.task.id) {
            Some(t) => t.feedback.push(sample),
            None => self.persona.tasks.push(PersonaTask { task: sample.task.clone(), feedback: vec![sample] }),
        }
        self.persona.vocabulary = vocab;
        for c in added {
            writeln!(self.out, "  new concept for {}s: {}", c.component_type.type_word(), c.text)?;
        }
        save_persona(self.persona, self.path)?;
        Ok(())
    }
}

fn parse_constraint(line: &str, space: &StateSpace) -> Result<Option<StateConstraint>, String> {
    if line.is_empty() {
        return Ok(None);
    }
    let mut c = StateConstraint::new();
    for part in line.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part.split_once('=').ok_or_else(|| format!("'{part}' is not name=true|false"))?;
        let name = name.trim();
        space.require(name).map_err(|e| e.to_string())?;
        let value: bool = value.trim().parse().map_err(|_| format!("'{}' is not true or false", value.trim()))?;
        c = c.with(name, value);
    }
    Ok(Some(c))
}

fn parse_explanation(
    line: &str,
    task: &TaskDescription,
    space: &StateSpace,
) -> Result<Option<Vec<ExplanationItem>>, String> {
    if line.is_empty() {
        return Ok(None);
    }
    let mut items = Vec::new();
    for part in line.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once(':') {
            Some((component, concept)) => {
                let (t, c): (ComponentType, &str) = task
                    .components()
                    .find(|(_, c)| norm_key(c) == norm_key(component))
                    .ok_or_else(|| format!("'{}' is not part of this task", component.trim()))?;
                if concept.trim().is_empty() {
                    return Err(format!("say what it is about '{c}'"));
                }
                items.push(ExplanationItem::component(c, t, concept.trim()));
            }
            None => {
                space.require(part).map_err(|_| format!("'{part}' is neither a state variable nor 'component: concept'"))?;
                items.push(ExplanationItem::state(part));
            }
        }
    }
    Ok(Some(items))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_explanations() {
        let e = TokenRef::Concept {
            component: "Drilling holes in the wall to put up a coat hook".into(),
            component_type: ComponentType::Action,
            concept: "can cause major damage or harm if done imprecisely".into(),
        };
        assert_eq!(
            render_explanation(&e),
            "Drilling holes in the wall to put up a coat hook is an action which can cause major damage or harm if done imprecisely"
        );
        let o = TokenRef::Concept {
            component: "electric drill".into(),
            component_type: ComponentType::Object,
            concept: "can easily hurt someone without intending to".into(),
        };
        assert_eq!(render_explanation(&o), "electric drill is an object which can easily hurt someone without intending to");
        let l = TokenRef::Concept {
            component: "hallway".into(),
            component_type: ComponentType::Location,
            concept: "is a tight space".into(),
        };
        assert!(render_explanation(&l).starts_with("hallway is a location which"));
        assert_eq!(render_explanation(&TokenRef::State { state_variable: "weekend".into() }), "weekend");
    }

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut input: &[u8] = b"";
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with_io(args.iter().copied(), &mut input, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        let (code, _, err) = run(&["taaco", "evaluate", "--bogus"]);
        assert_eq!(code, 2);
        assert!(err.contains("--bogus"));
        assert_eq!(run(&["taaco"]).0, 2);
        let (code, out, _) = run(&["taaco", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("teach"));
    }

    #[test]
    fn replay_without_cache_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let persona = dir.path().join("p.json");
        let cache = dir.path().join("c.jsonl");
        let p = persona.to_str().unwrap();
        assert_eq!(run(&["taaco", "synth", "--out", p, "--cache-out", cache.to_str().unwrap(), "--tasks", "5"]).0, 0);
        let (code, _, err) = run(&["taaco", "score", "--persona", p]);
        assert_eq!(code, 2, "{err}");
        let (code, _, err) = run(&["taaco", "score", "--persona", "/nonexistent/p.json", "--cache", "x"]);
        assert_eq!(code, 1, "{err}");
    }

    #[test]
    fn constraint_and_explanation_parsing() {
        let space = StateSpace::new(&["weekend", "guests_present"]).unwrap();
        let task = TaskDescription::new("t", "frying eggs", "cooking", &["stove"], &["kitchen"]);
        assert_eq!(parse_constraint("", &space).unwrap(), None);
        let c = parse_constraint("weekend=true, guests_present = false", &space).unwrap().unwrap();
        assert_eq!(c.bindings.len(), 2);
        assert!(parse_constraint("raining=true", &space).is_err());
        assert!(parse_constraint("weekend=maybe", &space).is_err());

        let e = parse_explanation("Stove: involves an open flame; weekend", &task, &space).unwrap().unwrap();
        assert_eq!(e[0], ExplanationItem::component("stove", ComponentType::Object, "involves an open flame"));
        assert_eq!(e[1], ExplanationItem::state("weekend"));
        assert!(parse_explanation("oven: is hot", &task, &space).is_err());
        assert!(parse_explanation("tuesday", &task, &space).is_err());
    }
}
