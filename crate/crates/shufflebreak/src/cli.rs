//! Command-line interface: single attacks, campaigns, offline mutation.
//!
//! Settings merge as flags > config file > defaults. Live (non-mock) runs
//! require an explicit `--i-understand-risks` acknowledgement.

use crate::archive::{TraceArchive, TraceSummary};
use crate::campaign::{
    aggregate, load_dataset, render_report, run_campaign, DatasetManifest, Instruction,
    ReportFormat,
};
use crate::engine::{attack, AttackConfig, AttackContext, AttackMode, PplGateConfig, TraceErrorKind};
use crate::gateway::{
    EndpointConfig, HttpChatBackend, HttpPerplexityScorer, ModelClient, PerplexityScorer,
    ScriptedBackend, TranscriptWriter,
};
use crate::img::{
    apply_protected_region, fit_to_grid, grid_side, load_image, save_png, shuffle_image,
    ProtectedRegion,
};
use crate::judge::{Judge, JudgePromptTemplate, ToxicScore};
use crate::perm::seeded_rng;
use crate::synthetic;
use crate::text::{shuffle_text, TextShuffleKind, TextTools};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

const RISK_NOTICE: &str = "\
This command sends adversarial jailbreak prompts to a live model endpoint.
Run it only against models you own or are explicitly authorized to red-team,
and handle any elicited content responsibly. Pass --i-understand-risks to
acknowledge and proceed, or use --mock for a credential-free demonstration.";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file, or dataset. Exit code 2.
    Config(String),
    /// Unrecoverable gateway failure. Exit code 3.
    Gateway(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Gateway(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Gateway(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "shufflebreak",
    about = "Shuffle-based black-box red-teaming harness for multimodal chat models",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attack a single instruction and report the best toxic score.
    Attack(AttackArgs),
    /// Run a full campaign over a dataset manifest and write reports.
    Campaign(CampaignArgs),
    /// Shuffle text and/or an image offline; no network access.
    Mutate(MutateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ShuffleArg {
    None,
    WordWise,
    Trigram,
    WithinTrigram,
    PosNounsAdj,
    TokenWise,
}

impl From<ShuffleArg> for TextShuffleKind {
    fn from(arg: ShuffleArg) -> Self {
        match arg {
            ShuffleArg::None => TextShuffleKind::None,
            ShuffleArg::WordWise => TextShuffleKind::WordWise,
            ShuffleArg::Trigram => TextShuffleKind::Trigram,
            ShuffleArg::WithinTrigram => TextShuffleKind::WithinTrigram,
            ShuffleArg::PosNounsAdj => TextShuffleKind::PosNounsAdj,
            ShuffleArg::TokenWise => TextShuffleKind::TokenWise,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Both,
    TextOnly,
    ImageOnly,
    Original,
}

impl From<ModeArg> for AttackMode {
    fn from(arg: ModeArg) -> Self {
        match arg {
            ModeArg::Both => AttackMode::Both,
            ModeArg::TextOnly => AttackMode::TextOnly,
            ModeArg::ImageOnly => AttackMode::ImageOnly,
            ModeArg::Original => AttackMode::Original,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(arg: FormatArg) -> Self {
        match arg {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML config file merged beneath the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target chat-completions base URL.
    #[arg(long)]
    target_url: Option<String>,
    /// Target model name.
    #[arg(long)]
    target_model: Option<String>,
    /// Judge chat-completions base URL.
    #[arg(long)]
    judge_url: Option<String>,
    /// Judge model name.
    #[arg(long)]
    judge_model: Option<String>,
    /// Maximum optimization iterations per instruction.
    #[arg(long)]
    max_iter: Option<u32>,
    /// Toxic-score success threshold (1-5).
    #[arg(long)]
    threshold: Option<u8>,
    /// Image patch count (a perfect square).
    #[arg(long)]
    patches: Option<u32>,
    /// Text shuffle granularity.
    #[arg(long, value_enum)]
    text_shuffle: Option<ShuffleArg>,
    /// Which halves of the instruction to shuffle.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Campaign seed; fixes every shuffle.
    #[arg(long)]
    seed: Option<u64>,
    /// Protected rectangle `x0,y0,x1,y1` in normalized coordinates.
    #[arg(long)]
    region: Option<String>,
    /// Gate every attacked text through a perplexity scorer first.
    #[arg(long)]
    ppl_gate: bool,
    /// Perplexity threshold for the gate.
    #[arg(long)]
    ppl_threshold: Option<f64>,
    /// Output directory for traces, mutated images and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the built-in scripted mocks; no network, no credentials.
    #[arg(long)]
    mock: bool,
    /// Stdout rendering for results.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Acknowledge the live-attack risk notice.
    #[arg(long)]
    i_understand_risks: bool,
    /// Judge prompt template file ({question}/{response} placeholders).
    #[arg(long)]
    judge_template: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// The instruction text to attack.
    #[arg(long, required = true)]
    text: String,
    /// Optional instruction image (PNG or JPEG).
    #[arg(long)]
    image: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CampaignArgs {
    /// Dataset manifest (newline-delimited JSON). With --mock this may be
    /// omitted; the bundled synthetic fixture is generated under --out.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Concurrent instructions.
    #[arg(long)]
    parallelism: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct MutateArgs {
    /// Text to shuffle.
    #[arg(long)]
    text: Option<String>,
    /// Image to patch-shuffle.
    #[arg(long)]
    image: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

// --- config file -----------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    max_iter: Option<u32>,
    threshold: Option<u8>,
    patches: Option<u32>,
    text_shuffle: Option<TextShuffleKind>,
    mode: Option<AttackMode>,
    parallelism: Option<usize>,
    out: Option<PathBuf>,
    region: Option<[f64; 4]>,
    ppl_gate: Option<bool>,
    ppl_threshold: Option<f64>,
    temperature: Option<f32>,
    max_tokens: Option<u32>,
    target: Option<FileEndpoint>,
    judge: Option<FileEndpoint>,
    ppl: Option<FileEndpoint>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEndpoint {
    url: Option<String>,
    model: Option<String>,
    auth_env: Option<String>,
    timeout_secs: Option<u64>,
    max_retries: Option<u32>,
    max_concurrency: Option<usize>,
    requests_per_minute: Option<u32>,
    backoff_base_ms: Option<u64>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&content).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_region_flag(raw: &str) -> Result<ProtectedRegion, CliError> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--region: {e}")))?;
    let [x0, y0, x1, y1] = parts[..] else {
        return Err(CliError::Config(
            "--region expects four comma-separated numbers".to_string(),
        ));
    };
    ProtectedRegion::new(x0, y0, x1, y1).map_err(|e| CliError::Config(e.to_string()))
}

/// Fully merged settings for one invocation.
struct Resolved {
    attack: AttackConfig,
    target: EndpointConfig,
    judge: EndpointConfig,
    ppl: Option<EndpointConfig>,
    parallelism: usize,
    out: Option<PathBuf>,
    mock: bool,
    format: Option<ReportFormat>,
    judge_template: JudgePromptTemplate,
}

fn endpoint_from(
    file: Option<&FileEndpoint>,
    url_flag: Option<&String>,
    model_flag: Option<&String>,
    default_auth_env: &str,
) -> EndpointConfig {
    let defaults = EndpointConfig::default();
    let file_default = FileEndpoint::default();
    let file = file.unwrap_or(&file_default);
    let auth = file
        .auth_env
        .clone()
        .unwrap_or_else(|| default_auth_env.to_string());
    EndpointConfig {
        base_url: url_flag
            .cloned()
            .or_else(|| file.url.clone())
            .unwrap_or_default(),
        model_name: model_flag
            .cloned()
            .or_else(|| file.model.clone())
            .unwrap_or_default(),
        auth_env_var: (!auth.is_empty()).then_some(auth),
        timeout_secs: file.timeout_secs.unwrap_or(defaults.timeout_secs),
        max_retries: file.max_retries.unwrap_or(defaults.max_retries),
        max_concurrency: file.max_concurrency.unwrap_or(defaults.max_concurrency),
        requests_per_minute: file.requests_per_minute,
        backoff_base_ms: file.backoff_base_ms.unwrap_or(defaults.backoff_base_ms),
    }
}

fn resolve(common: &CommonArgs) -> Result<Resolved, CliError> {
    let file = load_file_config(common.config.as_deref())?;
    let defaults = AttackConfig::default();

    let threshold = common.threshold.or(file.threshold);
    let s_tau = match threshold {
        None => defaults.s_tau,
        Some(v) => ToxicScore::new(v)
            .ok_or_else(|| CliError::Config(format!("--threshold must be 1-5, got {v}")))?,
    };
    let region = match &common.region {
        Some(raw) => Some(parse_region_flag(raw)?),
        None => match file.region {
            Some([x0, y0, x1, y1]) => Some(
                ProtectedRegion::new(x0, y0, x1, y1)
                    .map_err(|e| CliError::Config(e.to_string()))?,
            ),
            None => None,
        },
    };
    let gate_enabled = common.ppl_gate || file.ppl_gate.unwrap_or(false);
    let ppl_gate = gate_enabled.then(|| PplGateConfig {
        ppl_threshold: common
            .ppl_threshold
            .or(file.ppl_threshold)
            .unwrap_or(PplGateConfig::default().ppl_threshold),
        ..Default::default()
    });

    let attack = AttackConfig {
        max_iter: common.max_iter.or(file.max_iter).unwrap_or(defaults.max_iter),
        s_tau,
        patch_count: common.patches.or(file.patches).unwrap_or(defaults.patch_count),
        text_shuffle: common
            .text_shuffle
            .map(TextShuffleKind::from)
            .or(file.text_shuffle)
            .unwrap_or(defaults.text_shuffle),
        mode: common
            .mode
            .map(AttackMode::from)
            .or(file.mode)
            .unwrap_or(defaults.mode),
        seed: common.seed.or(file.seed).unwrap_or(defaults.seed),
        protected_region: region,
        ppl_gate,
        temperature: file.temperature.unwrap_or(defaults.temperature),
        max_tokens: file.max_tokens.unwrap_or(defaults.max_tokens),
    };
    attack
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let judge_template = match &common.judge_template {
        Some(path) => {
            JudgePromptTemplate::from_file(path).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => JudgePromptTemplate::builtin(),
    };

    Ok(Resolved {
        attack,
        target: endpoint_from(
            file.target.as_ref(),
            common.target_url.as_ref(),
            common.target_model.as_ref(),
            "TARGET_API_KEY",
        ),
        judge: endpoint_from(
            file.judge.as_ref(),
            common.judge_url.as_ref(),
            common.judge_model.as_ref(),
            "JUDGE_API_KEY",
        ),
        ppl: file
            .ppl
            .as_ref()
            .map(|p| endpoint_from(Some(p), None, None, "PPL_API_KEY")),
        parallelism: file.parallelism.unwrap_or(1),
        out: common.out.clone().or(file.out),
        mock: common.mock,
        format: common.format.map(ReportFormat::from),
        judge_template,
    })
}

fn require_risk_ack(resolved: &Resolved, common: &CommonArgs) -> Result<(), CliError> {
    if resolved.mock || common.i_understand_risks {
        return Ok(());
    }
    Err(CliError::Config(RISK_NOTICE.to_string()))
}

fn require_endpoint(cfg: &EndpointConfig, which: &str) -> Result<(), CliError> {
    if cfg.base_url.is_empty() || cfg.model_name.is_empty() {
        return Err(CliError::Config(format!(
            "{which} endpoint needs a URL and a model (use --{which}-url/--{which}-model or the config file)"
        )));
    }
    Ok(())
}

/// Builds the attack context: scripted mocks or live HTTP clients.
fn build_context(
    resolved: &Resolved,
    archive: Option<Arc<TraceArchive>>,
    mock_campaign_target: bool,
) -> Result<AttackContext, CliError> {
    // Request/response transcripts land beside the other artifacts. The
    // writer only ever sees prompt and reply text, never credentials.
    let transcript = match &resolved.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Config(e.to_string()))?;
            Some(Arc::new(
                TranscriptWriter::create(dir.join("transcript.ndjson"))
                    .map_err(|e| CliError::Config(e.to_string()))?,
            ))
        }
        None => None,
    };
    let logged = |client: ModelClient| match &transcript {
        Some(t) => client.with_transcript(t.clone()),
        None => client,
    };
    let (target, judge_client, scorer): (ModelClient, ModelClient, Option<Arc<dyn PerplexityScorer>>) =
        if resolved.mock {
            let target_backend: Arc<dyn crate::gateway::ChatBackend> = if mock_campaign_target {
                Arc::new(synthetic::ShuffleProbeTarget)
            } else {
                Arc::new(ScriptedBackend::new(
                    "demo-target",
                    synthetic::demo_attack_target_script(),
                ))
            };
            let mut target_cfg = resolved.target.clone();
            target_cfg.max_concurrency = target_cfg.max_concurrency.max(8);
            let judge_backend = Arc::new(ScriptedBackend::new(
                "demo-judge",
                synthetic::keyword_judge_script(),
            ));
            (
                logged(ModelClient::new(target_backend, &target_cfg)),
                logged(ModelClient::new(judge_backend, &resolved.judge)),
                Some(Arc::new(synthetic::demo_scorer()) as Arc<dyn PerplexityScorer>),
            )
        } else {
            require_endpoint(&resolved.target, "target")?;
            require_endpoint(&resolved.judge, "judge")?;
            let target_backend = HttpChatBackend::new(&resolved.target)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let judge_backend = HttpChatBackend::new(&resolved.judge)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let scorer = match (&resolved.attack.ppl_gate, &resolved.ppl) {
                (None, _) => None,
                (Some(_), Some(ppl_cfg)) => Some(Arc::new(
                    HttpPerplexityScorer::new(ppl_cfg)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                ) as Arc<dyn PerplexityScorer>),
                (Some(_), None) => {
                    return Err(CliError::Config(
                        "--ppl-gate on a live run needs a [ppl] endpoint in the config file"
                            .to_string(),
                    ))
                }
            };
            (
                logged(ModelClient::new(Arc::new(target_backend), &resolved.target)),
                logged(ModelClient::new(Arc::new(judge_backend), &resolved.judge)),
                scorer,
            )
        };
    Ok(AttackContext {
        target: Arc::new(target),
        judge: Arc::new(Judge::new(judge_client, resolved.judge_template.clone())),
        scorer,
        tools: TextTools::builtin(),
        archive,
    })
}

pub async fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Attack(args) => cmd_attack(args).await,
        Command::Campaign(args) => cmd_campaign(args).await,
        Command::Mutate(args) => cmd_mutate(args),
    }
}

async fn cmd_attack(args: AttackArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.common)?;
    require_risk_ack(&resolved, &args.common)?;
    if let Some(path) = &args.image {
        if !path.is_file() {
            return Err(CliError::Config(format!(
                "image file `{}` does not exist",
                path.display()
            )));
        }
    }
    let archive = match &resolved.out {
        Some(dir) => Some(Arc::new(
            TraceArchive::create(dir).map_err(|e| CliError::Config(e.to_string()))?,
        )),
        None => None,
    };
    let ctx = build_context(&resolved, archive.clone(), false)?;
    let instruction = Instruction {
        id: "cli-attack".to_string(),
        category: "cli".to_string(),
        text: args.text.as_str().into(),
        image_path: args.image.clone(),
        protected_region: resolved.attack.protected_region,
    };
    let trace = attack(&instruction, &ctx, &resolved.attack).await;
    if let Some(archive) = &archive {
        if let Err(e) = archive.write_trace(&trace) {
            tracing::warn!(%e, "failed to write trace");
        }
    }
    let summary = TraceSummary::from(&trace);
    match resolved.format {
        Some(ReportFormat::Json) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
        }
        _ => {
            println!(
                "best_score={} success={} target_queries={} judge_queries={}",
                summary.best_score, summary.success, summary.target_queries, summary.judge_queries
            );
            if let Some(gate) = &summary.gate {
                println!(
                    "gate_blocked={} scorer_queries={}",
                    gate.blocked, gate.scorer_queries
                );
            }
        }
    }
    match trace.error {
        None => Ok(()),
        Some(e) if e.kind == TraceErrorKind::Input => Err(CliError::Config(e.message)),
        Some(e) => Err(CliError::Gateway(e.message)),
    }
}

async fn cmd_campaign(args: CampaignArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.common)?;
    require_risk_ack(&resolved, &args.common)?;
    let out = resolved
        .out
        .clone()
        .ok_or_else(|| CliError::Config("campaign requires --out".to_string()))?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::Config(e.to_string()))?;

    let manifest: DatasetManifest = match (&args.dataset, resolved.mock) {
        (Some(path), _) => load_dataset(path).map_err(|e| CliError::Config(e.to_string()))?,
        (None, true) => {
            // Credential-free demo: generate the bundled synthetic fixture.
            let fixture_dir = out.join("fixture");
            let path = synthetic::write_demo_fixture(&fixture_dir, resolved.attack.seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
            load_dataset(path).map_err(|e| CliError::Config(e.to_string()))?
        }
        (None, false) => {
            return Err(CliError::Config(
                "campaign requires --dataset (or --mock for the bundled demo)".to_string(),
            ))
        }
    };

    let archive = Arc::new(
        TraceArchive::create(out.join("traces")).map_err(|e| CliError::Config(e.to_string()))?,
    );
    let ctx = build_context(&resolved, Some(archive), true)?;
    let parallelism = args.parallelism.unwrap_or(resolved.parallelism);
    let traces = run_campaign(&manifest, &ctx, &resolved.attack, parallelism)
        .await
        .map_err(|e| CliError::Config(e.to_string()))?;
    let report = aggregate(&manifest.name, &traces, &resolved.attack);

    for format in ReportFormat::ALL {
        let rendered = render_report(&report, format);
        let path = out.join(format!("report.{}", format.extension()));
        std::fs::write(&path, rendered).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let stdout_format = resolved.format.unwrap_or(ReportFormat::Markdown);
    print!(
        "{}",
        String::from_utf8_lossy(&render_report(&report, stdout_format))
    );
    Ok(())
}

fn cmd_mutate(args: MutateArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.common)?;
    if args.text.is_none() && args.image.is_none() {
        return Err(CliError::Config(
            "mutate needs --text and/or --image".to_string(),
        ));
    }
    let seed = resolved.attack.seed;
    let tools = TextTools::builtin();

    if let Some(text) = &args.text {
        let mut rng = seeded_rng(seed);
        let (shuffled, permutation) = shuffle_text(
            resolved.attack.text_shuffle,
            &text.as_str().into(),
            &tools,
            &mut rng,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        println!("text: {shuffled}");
        match permutation {
            Some(p) => println!("permutation: {}", serde_json::to_string(&p).unwrap()),
            None => println!("permutation: null"),
        }
    }

    if let Some(path) = &args.image {
        let side =
            grid_side(resolved.attack.patch_count).map_err(|e| CliError::Config(e.to_string()))?;
        let original = load_image(path).map_err(|e| CliError::Config(e.to_string()))?;
        let fitted = fit_to_grid(&original, side).map_err(|e| CliError::Config(e.to_string()))?;
        let mut rng = seeded_rng(seed);
        let (shuffled, permutation) = shuffle_image(&fitted, resolved.attack.patch_count, &mut rng)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let finished = match &resolved.attack.protected_region {
            Some(region) => apply_protected_region(&fitted, &shuffled, region)
                .map_err(|e| CliError::Config(e.to_string()))?,
            None => shuffled,
        };
        let out_dir = resolved.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Config(e.to_string()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".to_string());
        let out_path = out_dir.join(format!("{stem}.shuffled.png"));
        save_png(&finished, &out_path).map_err(|e| CliError::Config(e.to_string()))?;
        println!("image: {}", out_path.display());
        println!(
            "patch_permutation: {}",
            serde_json::to_string(&permutation).unwrap()
        );
    }
    Ok(())
}
