use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tracing::{info, warn};
use tspe_core::curation::{curate, AutoReviewer, PromptSet, Reviewer, RuleTable, TerminalReviewer};
use tspe_core::encoder::{build_backend, Encoder};
use tspe_core::ensemble::AveragingMode;
use tspe_core::eval::{
    ablate_k, adapters, collect_reports, compare, evaluate, report_table, synth, Condition, EvalDataset,
    EvalOptions, EvaluationReport, RunDir,
};
use tspe_core::promptgen::{
    generate_candidates, generate_pools, map_pools, save_candidates, GeneratorBackend, OfflineGenerator, PoolSet,
    PoolSplit, PromptCandidate, RemoteGenerator, TOTAL_POOL_TERMS,
};
use tspe_core::taxonomy::{CategoryId, Taxonomy};
use tspe_core::{promptgen, shipped};

use crate::config::{io_failure, Failure, RunConfig};
use crate::{
    AblateArgs, Cli, Command, CompareArgs, CurateArgs, DatasetArgs, EvalArgs, GenBackend, GenCommand, GenPoolsArgs,
    GenPromptsArgs, PrepareArgs, ReportArgs, ReportFormat, ReviewMode, SynthArgs,
};

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    cache_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--jobs: {e}")))?;
    }
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        cache_dir: cli.cache_dir.or_else(|| cfg.cache_dir.clone()),
        cfg,
    };
    match cli.command {
        Command::Gen(GenCommand::Pools(a)) => gen_pools(&ctx, a),
        Command::Gen(GenCommand::Prompts(a)) => gen_prompts(&ctx, a),
        Command::Curate(a) => curate_cmd(&ctx, a),
        Command::Eval(a) => eval_cmd(&ctx, a),
        Command::Ablate(a) => ablate_cmd(&ctx, a),
        Command::Report(a) => report_cmd(&ctx, a),
        Command::Compare(a) => compare_cmd(a),
        Command::Prepare(a) => prepare_cmd(&ctx, a),
        Command::Synth(a) => synth_cmd(&ctx, a),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn stdout_line(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

impl Ctx {
    fn taxonomy_path<'a>(&'a self, arg: &'a Option<PathBuf>) -> Option<&'a PathBuf> {
        arg.as_ref().or(self.cfg.taxonomy.as_ref())
    }

    fn taxonomy(&self, arg: &Option<PathBuf>) -> Result<Taxonomy, Failure> {
        match self.taxonomy_path(arg) {
            Some(p) => Ok(Taxonomy::load(p)?),
            None => Ok(Taxonomy::shipped()),
        }
    }

    fn pools(&self, arg: &Option<PathBuf>) -> Result<PoolSet, Failure> {
        match arg.as_ref().or(self.cfg.pools.as_ref()) {
            Some(p) => Ok(PoolSet::load(p)?),
            None => Ok(PoolSet::shipped()),
        }
    }

    fn rules(&self, arg: &Option<PathBuf>) -> Result<RuleTable, Failure> {
        match arg.as_ref().or(self.cfg.rules.as_ref()) {
            Some(p) => Ok(RuleTable::load(p)?),
            None => Ok(RuleTable::shipped()),
        }
    }

    fn generator(&self, backend: GenBackend) -> Box<dyn GeneratorBackend> {
        match backend {
            GenBackend::Offline => Box::new(OfflineGenerator::new(self.seed)),
            GenBackend::Remote => Box::new(RemoteGenerator::new(self.cfg.remote.clone().unwrap_or_default())),
        }
    }

    /// `--root`, then the config's dataset roots, then the directory of a
    /// custom taxonomy file (where `tspe synth` puts its dataset).
    fn dataset_root(&self, args: &DatasetArgs) -> Result<PathBuf, Failure> {
        if let Some(r) = &args.root {
            return Ok(r.clone());
        }
        if let Some(r) = self.cfg.dataset_roots.get(&args.dataset) {
            return Ok(r.clone());
        }
        if let Some(dir) = self.taxonomy_path(&args.taxonomy).and_then(|p| p.parent()) {
            return Ok(if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir.to_path_buf() });
        }
        Err(Failure::Usage(format!(
            "no root for dataset {}: pass --root or set dataset_roots.{} in the config",
            args.dataset, args.dataset
        )))
    }

    fn backend_id(&self, args: &DatasetArgs) -> Result<String, Failure> {
        args.backend
            .clone()
            .or_else(|| self.cfg.backend_id.clone())
            .ok_or_else(|| Failure::Usage("no backend: pass --backend or set backend_id in the config".into()))
    }

    fn encoder(&self, backend_id: &str, dataset: &EvalDataset) -> Result<Encoder, Failure> {
        let backend = build_backend(backend_id, &self.cfg.backend, &dataset.label_texts())?;
        Ok(match &self.cache_dir {
            Some(dir) => Encoder::with_cache_dir(backend, dir)?,
            None => Encoder::new(backend),
        })
    }

    fn run_dir(&self, args: &DatasetArgs, backend_id: &str, what: &str) -> PathBuf {
        args.out.clone().unwrap_or_else(|| {
            self.cfg
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("runs"))
                .join(format!("{}-{backend_id}-{what}", args.dataset))
        })
    }

    fn options(&self, args: &DatasetArgs) -> EvalOptions {
        EvalOptions {
            runs: args.runs,
            seed: self.seed,
            averaging: args.averaging.into(),
        }
    }
}

struct Prepared {
    dataset: EvalDataset,
    encoder: Encoder,
    backend_id: String,
}

fn prepare_eval(ctx: &Ctx, args: &DatasetArgs) -> Result<Prepared, Failure> {
    let taxonomy = ctx.taxonomy(&args.taxonomy)?;
    let root = ctx.dataset_root(args)?;
    let dataset = EvalDataset::load(&taxonomy, &args.dataset, &root)?;
    let backend_id = ctx.backend_id(args)?;
    let encoder = ctx.encoder(&backend_id, &dataset)?;
    Ok(Prepared {
        dataset,
        encoder,
        backend_id,
    })
}

/// Effective settings of a run, written next to its results.
#[derive(Serialize)]
struct RunSnapshot<'a> {
    command: &'a str,
    dataset_id: &'a str,
    dataset_root: &'a Path,
    /// Custom taxonomy file; the shipped taxonomy when absent.
    taxonomy: Option<&'a Path>,
    backend_id: &'a str,
    backend_fingerprint: String,
    seed: u64,
    runs: usize,
    averaging: AveragingMode,
    cache_dir: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition: Option<Condition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    promptset: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ks: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<&'a Path>,
    config: &'a RunConfig,
}

impl<'a> RunSnapshot<'a> {
    fn new(ctx: &'a Ctx, command: &'a str, args: &'a DatasetArgs, p: &'a Prepared, opts: EvalOptions) -> Self {
        Self {
            command,
            dataset_id: &p.dataset.descriptor.dataset_id,
            dataset_root: &p.dataset.manifest.root,
            taxonomy: ctx.taxonomy_path(&args.taxonomy).map(PathBuf::as_path),
            backend_id: &p.backend_id,
            backend_fingerprint: p.encoder.backend().fingerprint(),
            seed: opts.seed,
            runs: opts.runs,
            averaging: opts.averaging,
            cache_dir: ctx.cache_dir.as_deref(),
            condition: None,
            promptset: None,
            ks: None,
            candidates: None,
            config: &ctx.cfg,
        }
    }
}

fn gen_pools(ctx: &Ctx, a: GenPoolsArgs) -> Result<(), Failure> {
    if a.attributes > TOTAL_POOL_TERMS {
        return Err(Failure::Usage(format!("--attributes must be at most {TOTAL_POOL_TERMS}")));
    }
    let split = PoolSplit::new(a.attributes, TOTAL_POOL_TERMS - a.attributes)?;
    let descriptions: Vec<String> = CategoryId::ALL
        .iter()
        .map(|c| {
            let cat = c.category();
            format!("{}: {}", cat.name, cat.description)
        })
        .collect();
    let backend = ctx.generator(a.backend);
    let generated = generate_pools(&descriptions, backend.as_ref(), split)?;
    let pools = map_pools(&generated, backend.provenance());
    write_file(&a.out, &pools.to_toml_string())?;
    info!(rounds = generated.report.rounds, proposed = generated.report.proposed, "pools generated");
    stdout_line(&format!(
        "wrote {} attributes and {} sources to {}",
        generated.attributes.attributes.len(),
        generated.sources.sources.len(),
        a.out.display()
    ));
    Ok(())
}

fn gen_prompts(ctx: &Ctx, a: GenPromptsArgs) -> Result<(), Failure> {
    let pools = ctx.pools(&a.pools)?;
    let taxonomy = ctx.taxonomy(&None)?;
    let mut examples: Vec<String> = Vec::new();
    for d in taxonomy.datasets_in(a.category) {
        for (_, text) in taxonomy.labeled_texts(&d.dataset_id)? {
            if !examples.contains(&text) {
                examples.push(text);
            }
        }
    }
    let backend = ctx.generator(a.backend);
    let out = generate_candidates(
        &a.category.category(),
        pools.for_category(a.category)?,
        &examples,
        a.n,
        backend.as_ref(),
    )?;
    save_candidates(&a.out, &out.candidates)?;
    let r = &out.report;
    stdout_line(&format!(
        "wrote {} candidates to {} ({} proposed, {} unparseable, {} outside pools, {} duplicates)",
        out.candidates.len(),
        a.out.display(),
        r.proposed,
        r.rejected_unparseable + r.rejected_shape,
        r.rejected_pool,
        r.rejected_duplicate
    ));
    Ok(())
}

fn transcript_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".transcript.txt");
    out.with_file_name(name)
}

fn curate_cmd(ctx: &Ctx, a: CurateArgs) -> Result<(), Failure> {
    let candidates = promptgen::load_candidates(&a.input)?;
    let rules = ctx.rules(&a.rules)?;
    let mut reviewer: Box<dyn Reviewer> = match a.mode {
        ReviewMode::Auto => Box::new(AutoReviewer {
            name: a.reviewer.clone().unwrap_or_else(|| "auto".into()),
        }),
        ReviewMode::Interactive => {
            let name = a
                .reviewer
                .clone()
                .or_else(|| std::env::var("USER").ok())
                .unwrap_or_else(|| "reviewer".into());
            Box::new(TerminalReviewer::new(name, std::io::stdin().lock(), std::io::stderr()))
        }
    };
    let outcome = curate(
        a.category,
        &candidates,
        rules.rules(),
        a.k,
        reviewer.as_mut(),
        a.preview_label.as_deref(),
    )?;
    outcome.set.save(&a.out)?;
    let transcript: String = outcome.transcript.iter().map(|t| format!("{t}\n")).collect();
    let tpath = transcript_path(&a.out);
    write_file(&tpath, &transcript)?;
    stdout_line(&format!(
        "wrote {} prompts to {} ({} denied by rules, {} reviewed); transcript in {}",
        outcome.set.k,
        a.out.display(),
        outcome.denied,
        outcome.transcript.len(),
        tpath.display()
    ));
    Ok(())
}

fn load_promptset(spec: &Option<String>, category: CategoryId) -> Result<Option<PromptSet>, Failure> {
    match spec.as_deref() {
        None => Ok(None),
        Some("shipped") => Ok(Some(shipped::promptset(category))),
        Some(path) => Ok(Some(PromptSet::load(Path::new(path))?)),
    }
}

fn eval_cmd(ctx: &Ctx, a: EvalArgs) -> Result<(), Failure> {
    let condition = match a.condition {
        Some(c) => c,
        None => match &ctx.cfg.condition {
            Some(s) => s.parse().map_err(|e: tspe_core::eval::EvalError| Failure::Usage(e.to_string()))?,
            None => Condition::Vanilla,
        },
    };
    let p = prepare_eval(ctx, &a.data)?;
    let promptset = load_promptset(&a.promptset, p.dataset.descriptor.category)?;
    if condition == Condition::Vanilla && promptset.is_some() {
        warn!("--promptset is ignored under the Vanilla condition");
    }
    let opts = ctx.options(&a.data);
    let out = evaluate(&p.dataset, &p.encoder, condition, promptset.as_ref(), opts)?;

    let what = condition.as_str().to_ascii_lowercase();
    let dir = RunDir::create(&ctx.run_dir(&a.data, &p.backend_id, &what))?;
    let mut snapshot = RunSnapshot::new(ctx, "eval", &a.data, &p, opts);
    snapshot.condition = Some(condition);
    snapshot.promptset = a.promptset.as_deref();
    dir.write_json("config.json", &snapshot)?;
    if let (Condition::Tspe, Some(set)) = (condition, &promptset) {
        dir.write_json("promptset.json", set)?;
    }
    dir.write_evaluation(&p.dataset.manifest.to_csv_string(), &out)?;
    let r = &out.report;
    stdout_line(&format!(
        "{} {} {}: {:.2}% over {} clips, {} run(s){}; results in {}",
        r.dataset_id,
        r.backend_id,
        r.condition.as_str(),
        r.accuracy,
        r.n_clips,
        r.runs,
        if r.identical_runs { ", identical" } else { "" },
        dir.path().display()
    ));
    Ok(())
}

fn ablate_cmd(ctx: &Ctx, a: AblateArgs) -> Result<(), Failure> {
    let p = prepare_eval(ctx, &a.data)?;
    let category = p.dataset.descriptor.category;
    let candidates: Vec<PromptCandidate> = match &a.candidates {
        Some(path) => promptgen::load_candidates(path)?,
        None => shipped::candidates(category),
    };
    let rules = ctx.rules(&a.rules)?;
    let opts = ctx.options(&a.data);
    let result = ablate_k(&p.dataset, &p.encoder, &candidates, rules.rules(), &a.ks, opts)?;

    let dir = RunDir::create(&ctx.run_dir(&a.data, &p.backend_id, "ablation"))?;
    let mut snapshot = RunSnapshot::new(ctx, "ablate", &a.data, &p, opts);
    snapshot.ks = Some(&a.ks);
    snapshot.candidates = a.candidates.as_deref();
    dir.write_json("config.json", &snapshot)?;
    let csv = result.to_csv_string();
    dir.write_text("ablation.csv", &csv)?;
    dir.write_json("ablation.json", &result)?;
    print!("{csv}");
    stdout_line(&format!("results in {}", dir.path().display()));
    Ok(())
}

fn report_cmd(ctx: &Ctx, a: ReportArgs) -> Result<(), Failure> {
    let reports = collect_reports(&a.input)?;
    if reports.is_empty() {
        return Err(Failure::Usage(format!("no report.json under {}", a.input.display())));
    }
    let taxonomy = ctx.taxonomy(&a.taxonomy)?;
    let table = report_table(&reports, &taxonomy);
    let text = match a.format {
        ReportFormat::Table => table.text,
        ReportFormat::Csv => table.csv,
    };
    if let Some(out) = &a.out {
        write_file(out, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn read_report(path: &Path) -> Result<EvaluationReport, Failure> {
    let path = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&path).map_err(|e| io_failure(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::Module {
        kind: "ReportError",
        message: format!("{}: {e}", path.display()),
    })
}

fn compare_cmd(a: CompareArgs) -> Result<(), Failure> {
    let c = compare(&read_report(&a.vanilla)?, &read_report(&a.tspe)?)?;
    stdout_line(&format!(
        "{} {}: Vanilla {:.2}  TSPE {:.2}  delta {:+.2}",
        c.dataset_id, c.backend_id, c.vanilla.accuracy, c.tspe.accuracy, c.delta
    ));
    Ok(())
}

fn prepare_cmd(ctx: &Ctx, a: PrepareArgs) -> Result<(), Failure> {
    let taxonomy = ctx.taxonomy(&a.taxonomy)?;
    let manifest = adapters::prepare(&taxonomy, &a.dataset, &a.root)?;
    let out = match &a.out {
        Some(o) => o.clone(),
        None => a.root.join(&taxonomy.dataset(&a.dataset)?.manifest_path),
    };
    manifest.write(&out)?;
    stdout_line(&format!("wrote {} rows to {}", manifest.rows.len(), out.display()));
    Ok(())
}

fn synth_cmd(ctx: &Ctx, a: SynthArgs) -> Result<(), Failure> {
    let taxonomy = ctx.taxonomy(&None)?;
    let mut spec = synth::SynthSpec::from_dataset(&taxonomy, &a.source, a.classes, a.clips, ctx.seed)?;
    spec.seconds = a.seconds;
    let ds = synth::generate(&spec, &a.out)?;
    stdout_line(&format!(
        "wrote {} clips of {} classes to {}; evaluate with --taxonomy {} --dataset {} --backend mock-planted",
        ds.dataset.manifest.rows.len(),
        spec.labels.len(),
        ds.root.display(),
        ds.taxonomy_path.display(),
        spec.dataset_id
    ));
    Ok(())
}
