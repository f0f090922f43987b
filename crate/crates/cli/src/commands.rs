use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};

use metalake_core::agent::{
    run_session, LlmPolicy, Policy, ScriptedPolicy, SelectionResult, SessionContext, SessionOptions,
};
use metalake_core::artifacts::LakePaths;
use metalake_core::catalog::{
    ingest_lake, load_catalog, save_catalog, CatalogStore, IngestOptions,
};
use metalake_core::descriptor::{
    describe_catalog, load_descriptors, save_descriptors, DescriptorSource, TableDescriptor,
};
use metalake_core::evalkit::{
    evaluate, load_tasks, recall_at_k, write_recall_csv, write_scores_csv, write_summary_json,
    EvalMode, LineageStore, Prediction, RecallDenominator,
};
use metalake_core::profiler::{
    load_profiles, profile_catalog, save_profiles, ProfileOptions, TableProfile,
};
use metalake_core::providers::{
    Embedder, HttpEmbedder, HttpGenerator, LocalEmbedder, ScriptedGenerator, TextGenerator,
};
use metalake_core::search::{
    baseline_topk, build_index, index_texts, render_block, search, IndexKind, SearchParams,
    SearchSession, VectorIndex,
};
use metalake_core::synthlake::{build_messy_lake, load_lineage, load_manifest, SynthConfig};
use metalake_core::tools::{column_profiler, data_finder, joinability_check, ColumnRef};

use crate::{
    AgentArgs, Cli, Command, DenominatorArg, EmbedderArg, EvalArgs, IndexArgs, KindArg, ModeArg,
    SearchArgs, SelectArgs, SynthArgs, ToolCommand,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing stage: run `metalake {stage}` first ({artifact} not found)")]
    MissingStage {
        stage: &'static str,
        artifact: String,
    },
    #[error(transparent)]
    Domain(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::MissingStage { .. } | CliError::Domain(_) => 1,
        }
    }
}

fn domain<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Domain(e.into())
}

pub struct Output {
    pub human: String,
    pub json: Value,
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let paths = LakePaths::new(&cli.lake);
    match &cli.command {
        Command::Ingest(a) => ingest(&paths, a.full_scan, a.inference_cap),
        Command::Profile(a) => profile(
            &paths,
            &ProfileOptions {
                top_k: a.top_k,
                histogram_bins: a.bins,
            },
        ),
        Command::Describe => describe(cli, &paths),
        Command::Index(a) => index(cli, &paths, a),
        Command::Search(a) => search_cmd(&paths, a),
        Command::Tool(a) => tool(&paths, &a.tool),
        Command::Select(a) => select(cli, &paths, a),
        Command::Synth(a) => synth(cli, a),
        Command::Eval(a) => eval(cli, &paths, a),
    }
}

fn require(path: &Path, stage: &'static str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingStage {
            stage,
            artifact: path.display().to_string(),
        })
    }
}

fn catalog(paths: &LakePaths) -> Result<CatalogStore, CliError> {
    require(&paths.catalog(), "ingest")?;
    let mut c = load_catalog(&paths.catalog()).map_err(domain)?;
    // The lake may have moved since ingestion.
    c.lake_root = paths.root().to_path_buf();
    Ok(c)
}

fn profiles(paths: &LakePaths) -> Result<BTreeMap<String, TableProfile>, CliError> {
    require(&paths.profiles(), "profile")?;
    Ok(load_profiles(&paths.profiles())
        .map_err(domain)?
        .into_iter()
        .map(|p| (p.table_id.clone(), p))
        .collect())
}

fn descriptors(paths: &LakePaths) -> Result<Vec<TableDescriptor>, CliError> {
    require(&paths.descriptors(), "describe")?;
    load_descriptors(&paths.descriptors()).map_err(domain)
}

fn descriptor_map(list: Vec<TableDescriptor>) -> BTreeMap<String, TableDescriptor> {
    list.into_iter().map(|d| (d.table_id.clone(), d)).collect()
}

fn single_kind(kind: KindArg) -> Result<IndexKind, CliError> {
    match kind {
        KindArg::SchemaOnly => Ok(IndexKind::SchemaOnly),
        KindArg::Content => Ok(IndexKind::Content),
        KindArg::Discriminative => Ok(IndexKind::Discriminative),
        KindArg::All => Err(CliError::Usage(
            "--kind all is only valid for `index`".into(),
        )),
    }
}

fn load_index(paths: &LakePaths, kind: IndexKind) -> Result<VectorIndex, CliError> {
    let p = paths.index(kind.slug());
    require(&p, "index")?;
    VectorIndex::load(&p, kind).map_err(domain)
}

fn generator(cli: &Cli) -> Result<Option<Box<dyn TextGenerator>>, CliError> {
    let spec = cli.provider.trim();
    if spec == "none" {
        return Ok(None);
    }
    if spec == "live" {
        return match HttpGenerator::from_env() {
            Some(g) => Ok(Some(Box::new(g))),
            None => Err(CliError::Usage(format!(
                "--provider live needs {}",
                metalake_core::providers::ENV_LLM_ENDPOINT
            ))),
        };
    }
    if let Some(file) = spec.strip_prefix("scripted:") {
        let path = PathBuf::from(file);
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "script file {} does not exist",
                path.display()
            )));
        }
        return Ok(Some(Box::new(
            ScriptedGenerator::from_file(&path).map_err(domain)?,
        )));
    }
    Err(CliError::Usage(format!(
        "unknown provider `{spec}` (expected none, live or scripted:<file>)"
    )))
}

fn embedder(kind: EmbedderArg, dims: usize) -> Result<Box<dyn Embedder>, CliError> {
    match kind {
        EmbedderArg::Local => Ok(Box::new(LocalEmbedder::new())),
        EmbedderArg::Remote => HttpEmbedder::from_env(dims)
            .map(|e| Box::new(e) as Box<dyn Embedder>)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "--embedder remote needs {}",
                    metalake_core::providers::ENV_EMBED_ENDPOINT
                ))
            }),
    }
}

fn ingest(paths: &LakePaths, full_scan: bool, inference_cap: usize) -> Result<Output, CliError> {
    let opts = IngestOptions {
        full_scan,
        inference_cap,
    };
    let (cat, report) = ingest_lake(paths.root(), &opts).map_err(domain)?;
    save_catalog(&cat, &paths.catalog()).map_err(domain)?;
    let mut human = format!(
        "ingested {} tables ({} empty, {} skipped) into {}",
        report.ingested,
        report.empty_tables.len(),
        report.skipped.len(),
        paths.catalog().display()
    );
    for s in &report.skipped {
        let _ = write!(human, "\nskipped {}: {}", s.path, s.reason);
    }
    Ok(Output {
        human,
        json: json!({"catalog": paths.catalog(), "report": to_json(&report)}),
    })
}

fn profile(paths: &LakePaths, opts: &ProfileOptions) -> Result<Output, CliError> {
    let cat = catalog(paths)?;
    let profiles = profile_catalog(&cat, opts).map_err(domain)?;
    save_profiles(&profiles, &paths.profiles()).map_err(domain)?;
    let columns: usize = profiles.iter().map(|p| p.columns.len()).sum();
    Ok(Output {
        human: format!("profiled {} tables, {columns} columns", profiles.len()),
        json: json!({"profiles": paths.profiles(), "tables": profiles.len(), "columns": columns}),
    })
}

fn describe(cli: &Cli, paths: &LakePaths) -> Result<Output, CliError> {
    let cat = catalog(paths)?;
    let profiles = profiles(paths)?;
    let gen = generator(cli)?;
    let list = describe_catalog(&cat, &profiles, gen.as_deref()).map_err(domain)?;
    save_descriptors(&list, &paths.descriptors()).map_err(domain)?;
    let llm = list
        .iter()
        .filter(|d| d.source == DescriptorSource::Llm)
        .count();
    Ok(Output {
        human: format!(
            "described {} tables ({llm} from the language model, {} from templates)",
            list.len(),
            list.len() - llm
        ),
        json: json!({"descriptors": paths.descriptors(), "tables": list.len(), "llm": llm}),
    })
}

fn index(cli: &Cli, paths: &LakePaths, a: &IndexArgs) -> Result<Output, CliError> {
    let kinds: Vec<IndexKind> = match a.kind {
        KindArg::All => IndexKind::ALL.to_vec(),
        k => vec![single_kind(k)?],
    };
    let cat = catalog(paths)?;
    let needs_text = kinds.iter().any(|k| *k != IndexKind::SchemaOnly);
    let descs = if needs_text {
        descriptors(paths)?
    } else {
        Vec::new()
    };
    let emb = embedder(a.embedder, a.dims)?;
    let mut human = String::new();
    let mut built = Vec::new();
    for kind in kinds {
        let texts = index_texts(kind, &cat, &descs, cli.seed).map_err(domain)?;
        let idx = build_index(&texts, kind, emb.as_ref()).map_err(domain)?;
        let path = paths.index(kind.slug());
        idx.save(&path).map_err(domain)?;
        let _ = writeln!(
            human,
            "{}: {} vectors of {} dims -> {}",
            kind.slug(),
            idx.len(),
            idx.dims(),
            path.display()
        );
        built.push(json!({"kind": kind, "entries": idx.len(), "dims": idx.dims(), "path": path}));
    }
    Ok(Output {
        human,
        json: Value::Array(built),
    })
}

fn search_cmd(paths: &LakePaths, a: &SearchArgs) -> Result<Output, CliError> {
    let kind = single_kind(a.kind)?;
    let idx = load_index(paths, kind)?;
    let descs = if paths.descriptors().exists() {
        descriptor_map(descriptors(paths)?)
    } else {
        BTreeMap::new()
    };
    let emb = embedder(a.embedder, a.dims)?;
    let mut session = match &a.session {
        Some(p) if p.exists() => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing session {}", p.display()))?
        }
        _ => SearchSession::new("cli"),
    };
    let params = SearchParams {
        k: a.k,
        max_distance: a.embedder.max_distance(a.max_distance),
    };
    let render = |id: &str| render_block(&descs, id, a.attached);
    let result =
        search(&idx, emb.as_ref(), &mut session, &a.query, &params, &render).map_err(domain)?;
    if let Some(p) = &a.session {
        std::fs::write(p, serde_json::to_string_pretty(&session).map_err(domain)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    let human = if result.rendered.is_empty() {
        "no tables matched".to_string()
    } else {
        result.rendered.clone()
    };
    Ok(Output {
        human,
        json: to_json(&result),
    })
}

fn tool(paths: &LakePaths, t: &ToolCommand) -> Result<Output, CliError> {
    let cat = catalog(paths)?;
    let json = match t {
        ToolCommand::Profile { table, column } => {
            to_json(&column_profiler(&cat, table, column).map_err(domain)?)
        }
        ToolCommand::Find {
            table,
            value,
            column,
        } => to_json(&data_finder(&cat, table, value, column.as_deref()).map_err(domain)?),
        ToolCommand::Join { left, right } => {
            let l = ColumnRef::parse(left).map_err(|e| CliError::Usage(e.to_string()))?;
            let r = ColumnRef::parse(right).map_err(|e| CliError::Usage(e.to_string()))?;
            to_json(&joinability_check(&cat, &l, &r).map_err(domain)?)
        }
    };
    Ok(Output {
        human: serde_json::to_string_pretty(&json).unwrap_or_default(),
        json,
    })
}

fn session_options(a: &AgentArgs) -> SessionOptions {
    SessionOptions {
        max_steps: a.budget,
        ablation: a.ablation,
        params: SearchParams {
            k: a.k,
            max_distance: a.embedder.max_distance(a.max_distance),
        },
        post_filter: a.post_filter,
        constraints: None,
    }
}

/// Shared inputs for agent runs over one lake.
struct AgentSetup {
    catalog: CatalogStore,
    index: VectorIndex,
    embedder: Box<dyn Embedder>,
    descriptors: BTreeMap<String, TableDescriptor>,
    generator: Option<Box<dyn TextGenerator>>,
}

impl AgentSetup {
    fn load(cli: &Cli, paths: &LakePaths, a: &AgentArgs) -> Result<Self, CliError> {
        let kind = single_kind(a.kind)?;
        let catalog = catalog(paths)?;
        let descriptors = descriptor_map(descriptors(paths)?);
        let index = load_index(paths, kind)?;
        Ok(Self {
            catalog,
            index,
            embedder: embedder(a.embedder, a.dims)?,
            descriptors,
            generator: generator(cli)?,
        })
    }

    fn ctx(&self) -> SessionContext<'_> {
        SessionContext {
            catalog: &self.catalog,
            index: &self.index,
            embedder: self.embedder.as_ref(),
            descriptors: &self.descriptors,
            generator: self.generator.as_deref(),
        }
    }
}

fn scripted_path(spec: &str) -> Result<Option<PathBuf>, CliError> {
    match spec.strip_prefix("scripted:") {
        Some(f) => {
            let p = PathBuf::from(f);
            if p.is_file() {
                Ok(Some(p))
            } else {
                Err(CliError::Usage(format!(
                    "policy script {} does not exist",
                    p.display()
                )))
            }
        }
        None => Ok(None),
    }
}

fn check_llm_policy(cli: &Cli) -> Result<(), CliError> {
    if cli.provider.trim() == "none" {
        return Err(CliError::Usage(
            "--policy llm needs a generation provider (--provider live or scripted:<file>)".into(),
        ));
    }
    Ok(())
}

fn selection_summary(r: &SelectionResult) -> String {
    let mut s = format!(
        "selected: {}\nsteps: {} ({})",
        if r.tables.is_empty() {
            "-".to_string()
        } else {
            r.tables.join(", ")
        },
        r.steps,
        to_json(&r.terminated_by).as_str().unwrap_or_default()
    );
    if !r.justification.is_empty() {
        let _ = write!(s, "\njustification: {}", r.justification);
    }
    if let Some(e) = &r.error {
        let _ = write!(s, "\nerror: {e}");
    }
    s
}

fn select(cli: &Cli, paths: &LakePaths, a: &SelectArgs) -> Result<Output, CliError> {
    let script = scripted_path(&a.policy)?;
    if script.is_none() {
        if a.policy != "llm" {
            return Err(CliError::Usage(format!(
                "unknown policy `{}` (expected scripted:<file> or llm)",
                a.policy
            )));
        }
        check_llm_policy(cli)?;
    }
    let setup = AgentSetup::load(cli, paths, &a.agent)?;
    let opts = session_options(&a.agent);
    let result = match script {
        Some(p) => {
            let mut policy = ScriptedPolicy::from_file(&p)
                .with_context(|| format!("reading {}", p.display()))?;
            run_session(&a.task, &setup.ctx(), &mut policy, &opts)
                .map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => {
            let gen = setup.generator.as_deref().expect("checked above");
            let mut policy = LlmPolicy::new(gen);
            run_session(&a.task, &setup.ctx(), &mut policy, &opts)
                .map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    if let Some(out) = &a.out {
        write_json(out, &result)?;
    }
    Ok(Output {
        human: selection_summary(&result),
        json: to_json(&result),
    })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(v).map_err(domain)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<Output, CliError> {
    let mut config = match &a.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SynthConfig>(&text)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    config.seed = cli.seed;
    let report = build_messy_lake(&a.clean, &a.out, &config).map_err(domain)?;
    let m = &report.manifest;
    Ok(Output {
        human: format!(
            "wrote {} tables to {}: {} base, {} splits, {} duplicates, {} low quality",
            m.total,
            a.out.display(),
            m.base,
            m.splits,
            m.duplicates,
            m.low_quality
        ),
        json: to_json(m),
    })
}

fn eval(cli: &Cli, paths: &LakePaths, a: &EvalArgs) -> Result<Output, CliError> {
    let tasks = load_tasks(&a.tasks).map_err(domain)?;
    let mode = match a.mode {
        ModeArg::Reference => EvalMode::Reference,
        ModeArg::Lineage => EvalMode::Lineage,
    };
    let denominator = match a.denominator {
        DenominatorArg::PerPartition => RecallDenominator::PerPartition,
        DenominatorArg::PerBase => RecallDenominator::PerBase,
    };
    if mode == EvalMode::Lineage {
        require(&paths.lineage(), "synth")?;
    }
    let lineage = if paths.lineage().exists() {
        let records = load_lineage(&paths.lineage()).map_err(domain)?;
        let bases = if paths.manifest().exists() {
            load_manifest(&paths.manifest())
                .map_err(domain)?
                .base_tables
        } else {
            Vec::new()
        };
        Some(LineageStore::new(records, bases))
    } else {
        None
    };

    let script = scripted_path(&a.policy)?;
    if script.is_none() && a.policy != "llm" && a.policy != "baseline" {
        return Err(CliError::Usage(format!(
            "unknown policy `{}` (expected scripted:<file>, llm or baseline)",
            a.policy
        )));
    }
    if a.policy == "llm" {
        check_llm_policy(cli)?;
    }
    let setup = AgentSetup::load(cli, paths, &a.agent)?;
    let opts = session_options(&a.agent);

    let mut predictions: BTreeMap<String, Prediction> = BTreeMap::new();
    let mut selections: Vec<Value> = Vec::new();
    if a.policy == "baseline" {
        for t in &tasks {
            let hits = baseline_topk(
                &setup.index,
                setup.embedder.as_ref(),
                &t.question,
                &opts.params,
                None,
            )
            .map_err(domain)?;
            let tables: Vec<String> = hits.into_iter().map(|h| h.table_id).collect();
            selections.push(json!({"task_id": t.task_id, "tables": tables, "steps": 0}));
            predictions.insert(t.task_id.clone(), Prediction { tables, steps: 0 });
        }
    } else {
        let scripts: BTreeMap<String, Vec<String>> = match &script {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => BTreeMap::new(),
        };
        for t in &tasks {
            let mut policy: Box<dyn Policy + '_> = match &script {
                Some(_) => match scripts.get(&t.task_id) {
                    Some(lines) => Box::new(ScriptedPolicy::new(lines.clone())),
                    None => {
                        log::warn!("no scripted replies for task {}", t.task_id);
                        continue;
                    }
                },
                None => Box::new(LlmPolicy::new(
                    setup.generator.as_deref().expect("checked above"),
                )),
            };
            let r = run_session(&t.question, &setup.ctx(), policy.as_mut(), &opts)
                .map_err(|e| CliError::Usage(format!("task {}: {e}", t.task_id)))?;
            selections.push(json!({
                "task_id": t.task_id,
                "tables": r.tables,
                "steps": r.steps,
                "terminated_by": r.terminated_by,
            }));
            predictions.insert(
                t.task_id.clone(),
                Prediction {
                    tables: r.tables,
                    steps: r.steps,
                },
            );
        }
    }

    let report = evaluate(&tasks, &predictions, mode, lineage.as_ref(), denominator);
    let out_dir = a
        .out_dir
        .clone()
        .unwrap_or_else(|| paths.meta_dir().join("eval"));
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_scores_csv(&report.rows, &out_dir.join("scores.csv")).map_err(domain)?;
    write_summary_json(&report.summary, &out_dir.join("summary.json")).map_err(domain)?;
    let mut sel_text = String::new();
    for s in &selections {
        sel_text.push_str(&serde_json::to_string(s).map_err(domain)?);
        sel_text.push('\n');
    }
    std::fs::write(out_dir.join("selections.jsonl"), sel_text).context("writing selections")?;

    if tasks.iter().any(|t| t.ref_tables.is_some()) {
        let mut rows = Vec::new();
        for kind in IndexKind::ALL {
            let p = paths.index(kind.slug());
            if !p.exists() {
                continue;
            }
            let idx = VectorIndex::load(&p, kind).map_err(domain)?;
            rows.extend(
                recall_at_k(
                    &idx,
                    setup.embedder.as_ref(),
                    &tasks,
                    &[1, 5, 10],
                    opts.params.max_distance,
                )
                .map_err(domain)?,
            );
        }
        write_recall_csv(&rows, &out_dir.join("recall_at_k.csv")).map_err(domain)?;
    }

    let s = &report.summary;
    let mut human = format!(
        "scored {} tasks ({} skipped): recall {:.4} precision {:.4} f1 {:.4}, mean steps {:.2}\nresults in {}",
        s.tasks_scored,
        s.tasks_skipped.len(),
        s.macro_recall,
        s.macro_precision,
        s.macro_f1,
        s.mean_steps,
        out_dir.display()
    );
    if let Some(n) = &s.noise_distribution {
        let _ = write!(
            human,
            "\nclean share {:.2}% of {} selected tables",
            n.percentages["clean"], n.total
        );
    }
    Ok(Output {
        human,
        json: to_json(&report.summary),
    })
}
