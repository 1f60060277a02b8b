use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crel_annosvc::server;
use crel_annosvc::{build_init, Project, ProjectError, Stoplist};
use crel_core::ed::{train_ed, EdExample, EdWeights, KnowledgeBase};
use crel_core::encoder::{EncoderConfig, PrecomputedVectors};
use crel_core::eval::{fleiss_kappa, load_dataset, micro_prf, DatasetStats, EvalOptions, Matching, Mode, RatingsMatrix};
use crel_core::io::{read_annotations, read_conversations, read_file, to_canonical_string, write_annotations, write_file};
use crel_core::md::{self, MdExample, MdModel, MdTrainConfig};
use crel_core::pel::{self, PelExample, PelModel, PelTrainConfig};
use crel_core::pem::detect_personal_mentions;
use crel_core::pipeline::{link_all, LinkConfig, Models};
use crel_core::{Conversation, ConversationAnnotation, PersonalEntityLink, Split, TurnAnnotation};

#[derive(Parser)]
#[command(name = "crel", version, about = "Conversational entity linking with personal entity mentions")]
struct Cli {
    /// Seed for every stochastic step (initialization, shuffling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate conversations with explicit entity links and personal entity links.
    Link(LinkArgs),
    /// Detect personal entity mentions ("my ...", "our ...") with the rule grammar.
    Pem(PemArgs),
    /// Train the mention detector.
    TrainMd(TrainMdArgs),
    /// Train the personal entity linker and select its threshold.
    TrainPel(TrainPelArgs),
    /// Fit the disambiguation weights on gold mentions.
    TrainEd(TrainEdArgs),
    /// Score predicted annotations against gold ones.
    Eval(EvalArgs),
    /// Fleiss' kappa of a ratings table.
    Kappa(KappaArgs),
    /// Per-split statistics of a gold dataset.
    Stats(StatsArgs),
    /// Run the annotation service, creating the project on first use.
    AnnotateServe(ServeArgs),
}

#[derive(Args)]
struct LinkArgs {
    /// Conversations JSON.
    #[arg(long, visible_alias = "conversations")]
    input: PathBuf,
    #[arg(long)]
    md: PathBuf,
    #[arg(long)]
    pel: PathBuf,
    /// KB directory (aliases.tsv, optional entity_vecs.tsv, word_vecs.tsv, titles.txt).
    #[arg(long)]
    kb: PathBuf,
    /// Disambiguation weights; prior-only when omitted.
    #[arg(long)]
    ed: Option<PathBuf>,
    /// Precomputed token vectors, for checkpoints trained on them.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Also offer mentions in SYSTEM turns as antecedents.
    #[arg(long)]
    include_system_antecedents: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PemArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Conversations JSON.
    #[arg(long, visible_alias = "conversations")]
    input: PathBuf,
    /// Gold annotations for (a superset of) the conversations.
    #[arg(long)]
    gold: PathBuf,
    /// Split to train on when the gold file carries split tags.
    #[arg(long, default_value = "train")]
    split: Split,
}

#[derive(Args)]
struct EncoderArgs {
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    #[arg(long, default_value_t = 512)]
    max_context_tokens: usize,
    /// Use precomputed token vectors instead of a trainable encoder.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Keep the encoder fixed and train only the head.
    #[arg(long)]
    freeze_encoder: bool,
}

impl EncoderArgs {
    fn config(&self) -> EncoderConfig {
        EncoderConfig { dim: self.dim, max_context_tokens: self.max_context_tokens, layers: self.layers }
    }
}

#[derive(Args)]
struct TrainMdArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 5e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    /// Checkpoint to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainPelArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 5e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    /// Width of the start/end projections.
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Offer gold mentions in SYSTEM turns as antecedent candidates.
    #[arg(long)]
    include_system_antecedents: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainEdArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// md, el, pel or pem.
    #[arg(long)]
    mode: Mode,
    /// strong or weak.
    #[arg(long, default_value = "strong")]
    matching: Matching,
    /// Count predicted links for gold "not in dialogue" mentions as false positives.
    #[arg(long)]
    include_nid: bool,
}

#[derive(Args)]
struct KappaArgs {
    /// CSV rows `subject,category,count`.
    #[arg(long)]
    ratings: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    gold: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory of UI assets served next to the API.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    /// Create the project (if needed) and exit without serving.
    #[arg(long)]
    init_only: bool,
    /// Conversations for a new project.
    #[arg(long)]
    conversations: Option<PathBuf>,
    /// KB directory for the stage-3 title search of a new project.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Linker output files to pool mentions from (repeatable).
    #[arg(long)]
    linker: Vec<PathBuf>,
    /// Mention detector checkpoint whose detections join the pool.
    #[arg(long)]
    md: Option<PathBuf>,
    /// Mentions never sent to linking, one per line.
    #[arg(long)]
    stoplist: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Core(crel_core::Error),
    Project(ProjectError),
    Invalid(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Project(e) => e.fmt(f),
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let io = match self {
            CliError::Core(e) => e.is_io(),
            CliError::Project(e) => e.is_io(),
            CliError::Invalid(_) => false,
            CliError::Io(_) => true,
        };
        if io {
            2
        } else {
            1
        }
    }
}

impl From<crel_core::Error> for CliError {
    fn from(e: crel_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ProjectError> for CliError {
    fn from(e: ProjectError) -> Self {
        CliError::Project(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => Ok(write_file(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_json(v: &Value) {
    print!("{}", to_canonical_string(v));
}

fn load_vectors(path: Option<&Path>) -> Result<Option<PrecomputedVectors>> {
    Ok(path.map(PrecomputedVectors::load).transpose()?)
}

/// Conversations paired with their gold annotation, restricted to `split` when the gold
/// file has split tags.
fn training_pairs(data: &DataArgs) -> Result<Vec<(Conversation, ConversationAnnotation)>> {
    let convs = read_conversations(&data.input)?;
    let mut gold = read_annotations(&data.gold)?;
    if gold.iter().any(|g| g.split.is_some()) {
        gold.retain(|g| g.split == Some(data.split));
    }
    let mut pairs = Vec::new();
    for g in gold {
        let c = convs
            .iter()
            .find(|c| c.id == g.id)
            .ok_or_else(|| CliError::Invalid(format!("{}: no conversation {:?} in {}", data.gold.display(), g.id, data.input.display())))?;
        pairs.push((c.clone(), g));
    }
    if pairs.is_empty() {
        return Err(CliError::Invalid(format!("no gold conversations for split {}", data.split)));
    }
    Ok(pairs)
}

fn validation_pairs(data: &DataArgs) -> Result<Vec<(Conversation, ConversationAnnotation)>> {
    let gold = read_annotations(&data.gold)?;
    if !gold.iter().any(|g| g.split == Some(Split::Val)) || data.split == Split::Val {
        return Ok(Vec::new());
    }
    training_pairs(&DataArgs { input: data.input.clone(), gold: data.gold.clone(), split: Split::Val })
}

fn cmd_link(a: &LinkArgs) -> Result<()> {
    let vectors = load_vectors(a.vectors.as_deref())?;
    let md_text = read_file(&a.md)?;
    let pel_text = read_file(&a.pel)?;
    let models = Models {
        md: MdModel::from_checkpoint(&md_text, &a.md.display().to_string(), vectors.as_ref())?,
        pel: PelModel::from_checkpoint(&pel_text, &a.pel.display().to_string(), vectors.as_ref())?,
        kb: KnowledgeBase::load(&a.kb)?,
        ed: match &a.ed {
            Some(p) => EdWeights::from_checkpoint(&read_file(p)?, &p.display().to_string())?,
            None => EdWeights::default(),
        },
    };
    let convs = read_conversations(&a.input)?;
    let config = LinkConfig { include_system_antecedents: a.include_system_antecedents };
    let anns = link_all(&convs, &models, config)?;
    emit(a.output.as_deref(), &crel_core::io::annotations_to_string(&anns))
}

fn cmd_pem(a: &PemArgs) -> Result<()> {
    let convs = read_conversations(&a.input)?;
    let anns: Vec<ConversationAnnotation> = convs
        .iter()
        .map(|c| {
            let mut ann = ConversationAnnotation::new(c.id.clone());
            for (t, turn) in c.user_turns() {
                let personal = detect_personal_mentions(turn, t)
                    .into_iter()
                    .map(|p| PersonalEntityLink { personal: p, antecedents: Vec::new(), inherited_entities: Vec::new() })
                    .collect();
                ann.turns.push(TurnAnnotation { turn: t, links: Vec::new(), personal });
            }
            ann
        })
        .collect();
    match &a.output {
        Some(p) => Ok(write_annotations(p, &anns)?),
        None => emit(None, &crel_core::io::annotations_to_string(&anns)),
    }
}

fn cmd_train_md(a: &TrainMdArgs, seed: Option<u64>) -> Result<()> {
    let pairs = training_pairs(&a.data)?;
    let mut examples = Vec::new();
    for (c, g) in &pairs {
        examples.extend(MdExample::from_gold(c, g)?);
    }
    let mut config = MdTrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        weight_decay: a.weight_decay,
        encoder: a.encoder.config(),
        train_encoder: !a.encoder.freeze_encoder,
        ..Default::default()
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let vectors = load_vectors(a.encoder.vectors.as_deref())?;
    let (model, losses) = md::train_md(&examples, &config, vectors.as_ref())?;
    write_file(&a.output, &model.to_checkpoint()?)?;
    let f1 = md::span_f1(&model, &examples)?;
    print_json(&json!({"examples": examples.len(), "final_loss": losses.last(), "train": f1, "checkpoint": a.output}));
    Ok(())
}

fn cmd_train_pel(a: &TrainPelArgs, seed: Option<u64>) -> Result<()> {
    let to_examples = |pairs: Vec<(Conversation, ConversationAnnotation)>| -> Result<Vec<PelExample>> {
        pairs
            .into_iter()
            .map(|(c, g)| Ok(PelExample::from_gold(c, &g, a.include_system_antecedents)?))
            .collect()
    };
    let train = to_examples(training_pairs(&a.data)?)?;
    let val = to_examples(validation_pairs(&a.data)?)?;
    let mut config = PelTrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        weight_decay: a.weight_decay,
        hidden: a.hidden,
        encoder: a.encoder.config(),
        train_encoder: !a.encoder.freeze_encoder,
        ..Default::default()
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let vectors = load_vectors(a.encoder.vectors.as_deref())?;
    let (model, report) = pel::train_pel(&train, &val, &config, vectors.as_ref())?;
    write_file(&a.output, &model.to_checkpoint()?)?;
    let val_f1 = if val.is_empty() { None } else { Some(pel::pair_f1(&model, &val)?) };
    print_json(&json!({
        "examples": train.len(),
        "final_loss": report.epoch_losses.last(),
        "tau": model.scorer.tau,
        "train": pel::pair_f1(&model, &train)?,
        "val": val_f1,
        "checkpoint": a.output,
    }));
    Ok(())
}

fn cmd_train_ed(a: &TrainEdArgs) -> Result<()> {
    let kb = KnowledgeBase::load(&a.kb)?;
    let examples: Vec<EdExample> =
        training_pairs(&a.data)?.into_iter().map(|(conversation, gold)| EdExample { conversation, gold }).collect();
    let (weights, report) = train_ed(&examples, &kb)?;
    write_file(&a.output, &weights.to_checkpoint())?;
    print_json(&json!({
        "lambda_prior": weights.lambda_prior,
        "lambda_local": weights.lambda_local,
        "lambda_coh": weights.lambda_coh,
        "theta_nil": weights.theta_nil,
        "train": report,
        "checkpoint": a.output,
    }));
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let gold = read_annotations(&a.gold)?;
    let pred = read_annotations(&a.pred)?;
    let report = micro_prf(&gold, &pred, a.mode, a.matching, &EvalOptions { include_nid: a.include_nid })?;
    print_json(&json!({
        "mode": a.mode,
        "matching": a.matching,
        "include_nid": a.include_nid,
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn_,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
    }));
    Ok(())
}

fn cmd_kappa(a: &KappaArgs) -> Result<()> {
    let m = RatingsMatrix::from_csv(&a.ratings)?;
    let kappa = fleiss_kappa(&m)?;
    print_json(&json!({"subjects": m.n_subjects(), "kappa": kappa}));
    Ok(())
}

fn stats_json(stats: &DatasetStats) -> Value {
    let mut v = serde_json::to_value(stats).expect("stats serialize");
    v["total"] = serde_json::to_value(stats.total()).expect("stats serialize");
    v
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let (_, stats) = load_dataset(&a.gold)?;
    print_json(&stats_json(&stats));
    Ok(())
}

fn open_or_create(a: &ServeArgs) -> Result<Project> {
    if Project::exists(&a.project) {
        return Ok(Project::open(&a.project)?);
    }
    let conv_path = a.conversations.as_ref().ok_or_else(|| {
        CliError::Invalid(format!("{} holds no project; pass --conversations to create one", a.project.display()))
    })?;
    let convs = read_conversations(conv_path)?;
    let kb = match &a.kb {
        Some(dir) => KnowledgeBase::load(dir)?,
        None => KnowledgeBase::new(Vec::new(), Default::default(), Default::default(), Vec::new())?,
    };
    let linkers = a.linker.iter().map(|p| read_annotations(p)).collect::<crel_core::Result<Vec<_>>>()?;
    let md = match &a.md {
        Some(p) => Some(MdModel::from_checkpoint(&read_file(p)?, &p.display().to_string(), None)?),
        None => None,
    };
    let stoplist = match &a.stoplist {
        Some(p) => Stoplist::parse(&read_file(p)?),
        None => Stoplist::default(),
    };
    let init = build_init(&convs, &linkers, md.as_ref(), &kb, &stoplist)?;
    Ok(Project::create(&a.project, init)?)
}

fn cmd_serve(a: &ServeArgs) -> Result<()> {
    let project = open_or_create(a)?;
    let state = project.state();
    let open = state.hits.values().filter(|h| h.is_open()).count();
    eprintln!(
        "project {}: {} conversations, {} HITs ({} open)",
        a.project.display(),
        state.conversations.len(),
        state.hits.len(),
        open
    );
    if a.init_only {
        return Ok(());
    }
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::Invalid(format!("bad --host/--port: {e}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(format!("cannot start runtime: {e}")))?;
    eprintln!("listening on http://{addr}");
    rt.block_on(server::serve(project, addr, a.static_dir.clone()))
        .map_err(|e| CliError::Io(format!("{addr}: {e}")))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Link(a) => cmd_link(a),
        Command::Pem(a) => cmd_pem(a),
        Command::TrainMd(a) => cmd_train_md(a, cli.seed),
        Command::TrainPel(a) => cmd_train_pel(a, cli.seed),
        Command::TrainEd(a) => cmd_train_ed(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Kappa(a) => cmd_kappa(a),
        Command::Stats(a) => cmd_stats(a),
        Command::AnnotateServe(a) => cmd_serve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
