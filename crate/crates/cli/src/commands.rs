use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde_json::{json, Value};
use synvox_core::asr_eval::{
    adjudication_rows, bootstrap_eval, error_inventory, eval_by_group, write_adjudication_csv, Normalizer,
};
use synvox_core::audio::{read_wav, write_wav};
use synvox_core::augment::{augment_clips, load_noise_bank, NamedClip};
use synvox_core::clients::EndpointKind;
use synvox_core::corpus::{import_csv, mix, split, Manifest, Origin, Utterance};
use synvox_core::dedup::{dedup, group_by_batch, uniqueness_curve};
use synvox_core::ratings::{
    anova_two_way, icc_grid, rater_bootstrap, read_ratings_csv, summarize, write_summary_csv, Metric, RatingMatrix,
};
use synvox_core::text::{ends_with_question, DEFAULT_QUESTION_MARKS};
use synvox_core::textgen::{generate_corpus, SentencePair, TextgenError};
use synvox_core::tts_qc::{filter_outliers, rebalance_questions, score_candidates, FilterPolicy, TtsCandidate};
use synvox_review::{AppState, ReviewStudy};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::config::{stage_seed, FilterConfig, RunConfig};
use crate::io::{dir_of, read_jsonl, read_lines, read_manifest, rebase_audio, write_json, write_jsonl};
use crate::{Analysis, Cli, Command, Invalid};

struct Ctx {
    cfg: RunConfig,
    root: u64,
    out: PathBuf,
}

impl Ctx {
    fn seed(&self, stage: &str) -> u64 {
        stage_seed(self.root, stage)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn normalizer(&self) -> Normalizer {
        self.cfg.normalizer.clone().unwrap_or_default()
    }

    fn iterations(&self) -> usize {
        self.cfg.eval.clone().unwrap_or_default().bootstrap_iterations
    }
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenText => "gen-text",
        Command::Dedup { .. } => "dedup",
        Command::UniqCurve { .. } => "uniq-curve",
        Command::Synth { .. } => "synth",
        Command::TtsFilter { .. } => "tts-filter",
        Command::Rebalance { .. } => "rebalance",
        Command::Augment { .. } => "augment",
        Command::Split { .. } => "split",
        Command::Mix { .. } => "mix",
        Command::Eval { .. } => "eval",
        Command::EvalGender { .. } => "eval-gender",
        Command::Errors { .. } => "errors",
        Command::RateServe { .. } => "rate-serve",
        Command::RatingsAnalyze { .. } => "ratings-analyze",
        Command::ImportCsv { .. } => "import-csv",
    }
}

fn now() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_default()
}

/// Timestamps are kept out of the artifacts and recorded here instead.
fn append_run_log(out: &Path, command: &str, root: u64, started: &str, ok: bool) -> anyhow::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(out.join("run_log.jsonl"))?;
    let entry = json!({
        "command": command, "root_seed": root, "started_at": started,
        "finished_at": now(), "ok": ok,
    });
    writeln!(f, "{entry}")?;
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let root = cli.seed.or(cfg.seed).unwrap_or(0);
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx {
        cfg,
        root,
        out: cli.out_dir,
    };
    let name = command_name(&cli.command);
    let started = now();
    let result = dispatch(&ctx, cli.command);
    append_run_log(&ctx.out, name, root, &started, result.is_ok())?;
    result
}

fn dispatch(ctx: &Ctx, command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenText => gen_text(ctx),
        Command::Dedup { input } => dedup_cmd(ctx, &input),
        Command::UniqCurve {
            input,
            counts,
            subsamples,
        } => uniq_curve(ctx, &input, counts, subsamples),
        Command::Synth { input } => synth(ctx, &input),
        Command::TtsFilter { candidates, manifest } => tts_filter(ctx, &candidates, manifest.as_deref()),
        Command::Rebalance {
            input,
            target,
            text_field,
        } => rebalance(ctx, &input, target, &text_field),
        Command::Augment { manifest, noise_dir } => augment(ctx, &manifest, noise_dir.as_deref()),
        Command::Split { manifest } => split_cmd(ctx, &manifest),
        Command::Mix { real, synthetic } => mix_cmd(ctx, &real, &synthetic),
        Command::Eval { refs, hyps, groups } => eval(ctx, &refs, &hyps, groups.as_deref()),
        Command::EvalGender { manifest, hyps } => eval_gender(ctx, &manifest, &hyps),
        Command::Errors {
            refs,
            hyps,
            language,
            top_k,
        } => errors(ctx, &refs, &hyps, &language, top_k),
        Command::RateServe {
            studies,
            log_dir,
            host,
            port,
        } => rate_serve(&studies, &log_dir, &host, port),
        Command::RatingsAnalyze { analysis } => ratings_analyze(ctx, analysis),
        Command::ImportCsv { input, origin, tag } => import(ctx, &input, &origin, &tag),
    }
}

fn gen_text(ctx: &Ctx) -> anyhow::Result<()> {
    let mut spec = ctx.cfg.section(&ctx.cfg.generation, "generation")?.clone();
    spec.seed = ctx.seed("gen-text");
    let endpoint = if spec.model.is_empty() { "llm" } else { spec.model.as_str() };
    let client = ctx.cfg.client(endpoint, EndpointKind::Llm)?;
    match runtime()?.block_on(generate_corpus(&spec, &client)) {
        Ok(out) => {
            write_jsonl(&ctx.path("pairs.jsonl"), &out.pairs)?;
            write_json(&ctx.path("generation_report.json"), &out.report)?;
            println!(
                "generated {} pairs ({} duplicates, {} questions)",
                out.pairs.len(),
                out.report.duplicates,
                out.report.questions
            );
            Ok(())
        }
        Err(e) => {
            if let TextgenError::Aborted { partial, .. } = &e {
                write_jsonl(&ctx.path("pairs.partial.jsonl"), &partial.pairs)?;
                write_json(&ctx.path("generation_report.partial.json"), &partial.report)?;
            }
            Err(e.into())
        }
    }
}

fn dedup_cmd(ctx: &Ctx, input: &Path) -> anyhow::Result<()> {
    let pairs: Vec<SentencePair> = read_jsonl(input)?;
    let (kept, report) = dedup(&pairs);
    write_jsonl(&ctx.path("unique.jsonl"), &kept)?;
    write_json(&ctx.path("dedup_report.json"), &report)?;
    println!("{} of {} unique ({:.4})", report.unique, report.total, report.unique_rate);
    Ok(())
}

fn uniq_curve(ctx: &Ctx, input: &Path, counts: Option<Vec<usize>>, subsamples: Option<usize>) -> anyhow::Result<()> {
    let pairs: Vec<SentencePair> = read_jsonl(input)?;
    let batches = group_by_batch(&pairs);
    let section = ctx.cfg.uniq_curve.as_ref();
    let counts = counts
        .or_else(|| section.map(|s| s.batch_counts.clone()))
        .unwrap_or_else(|| (1..=batches.len()).collect());
    let subsamples = subsamples.or(section.map(|s| s.subsamples)).unwrap_or(1000);
    let curve = uniqueness_curve(&batches, &counts, subsamples, ctx.seed("uniq-curve"))?;
    curve.write_csv(File::create(ctx.path("uniq_curve.csv"))?)?;
    write_json(&ctx.path("uniq_curve.json"), &curve)?;
    Ok(())
}

fn synth(ctx: &Ctx, input: &Path) -> anyhow::Result<()> {
    let pairs: Vec<SentencePair> = read_jsonl(input)?;
    let endpoint = ctx.cfg.synth.as_ref().map_or("tts", |s| s.endpoint.as_str());
    let client = ctx.cfg.client(endpoint, EndpointKind::Tts)?;
    let audio_dir = ctx.path("audio");
    std::fs::create_dir_all(&audio_dir)?;

    let results = runtime()?.block_on(futures::future::join_all(
        pairs.iter().map(|p| client.synthesize_speech(&p.target_text)),
    ));
    let mut candidates = Vec::new();
    let mut utts = Vec::new();
    let mut failures = Vec::new();
    for (p, res) in pairs.iter().zip(results) {
        let clip = match res {
            Ok(c) if !c.samples.is_empty() => c,
            Ok(_) => {
                failures.push(json!({"id": p.id, "error": "empty audio"}));
                continue;
            }
            Err(e) => {
                tracing::warn!(id = %p.id, error = %e, "synthesis failed");
                failures.push(json!({"id": p.id, "error": e.to_string()}));
                continue;
            }
        };
        let rel = format!("audio/{}.wav", p.id);
        write_wav(&ctx.path(&rel), &clip)?;
        candidates.push(TtsCandidate {
            utterance_id: p.id.clone(),
            source_text: p.target_text.clone(),
            audio_path: rel.clone(),
            retranscript: None,
            length_ratio: None,
            verdict: Default::default(),
        });
        let mut u = Utterance::new(
            &p.id,
            &p.target_text,
            rel,
            clip.samples.len() as u64,
            clip.sample_rate,
            client.model_id(),
            Origin::Synthetic,
        );
        u.dataset_tag = "synthetic".into();
        u.extra.insert("english_text".into(), json!(p.english_text));
        u.extra.insert("theme".into(), json!(p.theme));
        utts.push(u);
    }
    if candidates.is_empty() && !pairs.is_empty() {
        bail!("every synthesis request failed");
    }
    write_jsonl(&ctx.path("tts_candidates.jsonl"), &candidates)?;
    Manifest::new(utts).write_path(&ctx.path("synth_manifest.jsonl"))?;
    write_json(
        &ctx.path("synth_report.json"),
        &json!({"requested": pairs.len(), "synthesized": candidates.len(), "failures": failures}),
    )?;
    Ok(())
}

fn tts_filter(ctx: &Ctx, candidates_path: &Path, manifest: Option<&Path>) -> anyhow::Result<()> {
    let mut cands: Vec<TtsCandidate> = read_jsonl(candidates_path)?;
    let fc = ctx.cfg.filter.clone().unwrap_or_else(|| FilterConfig {
        endpoint: "asr".into(),
        policy: FilterPolicy::default(),
    });
    fc.policy.validate()?;
    let base = dir_of(candidates_path);
    let needs_asr = cands.iter().any(|c| c.retranscript.is_none());
    let failures = if needs_asr {
        let client = ctx.cfg.client(&fc.endpoint, EndpointKind::Asr)?;
        let load = |c: &TtsCandidate| read_wav(&base.join(&c.audio_path)).map_err(|e| e.to_string());
        runtime()?.block_on(score_candidates(&mut cands, fc.policy.ratio_measure, &client, load))?
    } else {
        Vec::new()
    };
    let outcome = filter_outliers(cands, &fc.policy)?;
    write_jsonl(&ctx.path("tts_kept.jsonl"), &outcome.kept)?;
    write_jsonl(&ctx.path("tts_removed.jsonl"), &outcome.removed)?;
    write_jsonl(&ctx.path("tts_pending.jsonl"), &outcome.pending)?;
    let failures: Vec<Value> = failures
        .iter()
        .map(|(id, f)| json!({"id": id, "error": format!("{f:?}")}))
        .collect();
    write_json(
        &ctx.path("filter_report.json"),
        &json!({"report": outcome.report, "scoring_failures": failures}),
    )?;
    if let Some(mp) = manifest {
        let m = read_manifest(mp)?;
        let keep: HashSet<&str> = outcome.kept.iter().map(|c| c.utterance_id.as_str()).collect();
        let mut utts: Vec<Utterance> = m.utterances.into_iter().filter(|u| keep.contains(u.id.as_str())).collect();
        rebase_audio(&mut utts, &dir_of(mp), &ctx.out)?;
        Manifest::new(utts).write_path(&ctx.path("filtered_manifest.jsonl"))?;
    }
    println!(
        "kept {}, removed {}, pending {} ({:.1}% removed)",
        outcome.report.kept,
        outcome.report.removed,
        outcome.report.pending,
        outcome.report.removal_fraction * 100.0
    );
    Ok(())
}

fn is_manifest(path: &Path) -> anyhow::Result<bool> {
    let first = read_lines(path)?.into_iter().find(|l| !l.trim().is_empty());
    Ok(first
        .and_then(|l| serde_json::from_str::<Value>(&l).ok())
        .is_some_and(|v| v.get("schema_version").is_some()))
}

fn rebalance(ctx: &Ctx, input: &Path, target: Option<f64>, text_field: &str) -> anyhow::Result<()> {
    let target = target
        .or(ctx.cfg.filter.as_ref().map(|f| f.policy.question_share_target))
        .or(ctx.cfg.generation.as_ref().map(|g| g.question_share_target))
        .unwrap_or(0.25);
    let seed = ctx.seed("rebalance");
    let q = |t: &str| ends_with_question(t, DEFAULT_QUESTION_MARKS);
    let report = if is_manifest(input)? {
        let m = read_manifest(input)?;
        let (mut utts, report) = rebalance_questions(&m.utterances, |u| q(&u.transcript), target, seed)?;
        rebase_audio(&mut utts, &dir_of(input), &ctx.out)?;
        Manifest {
            header: m.header,
            utterances: utts,
        }
        .write_path(&ctx.path("rebalanced_manifest.jsonl"))?;
        report
    } else {
        let items: Vec<Value> = read_jsonl(input)?;
        if let Some(i) = items.iter().position(|v| !v[text_field].is_string()) {
            return Err(Invalid(format!("item {} has no string field {text_field:?}", i + 1)).into());
        }
        let (out, report) = rebalance_questions(&items, |v| q(v[text_field].as_str().unwrap_or("")), target, seed)?;
        write_jsonl(&ctx.path("rebalanced.jsonl"), &out)?;
        report
    };
    write_json(&ctx.path("rebalance_report.json"), &report)?;
    println!(
        "{} -> {} items, question share {:.3}",
        report.total_before, report.total_after, report.share_after
    );
    Ok(())
}

fn augment(ctx: &Ctx, manifest: &Path, noise_dir: Option<&Path>) -> anyhow::Result<()> {
    let policy = ctx.cfg.augment.clone().unwrap_or_default();
    policy.validate()?;
    let noises = match noise_dir {
        Some(d) => load_noise_bank(d)?,
        None if policy.mix_noise => {
            return Err(Invalid("--noise-dir is required when augment.mix_noise is true".into()).into())
        }
        None => Vec::new(),
    };
    let m = read_manifest(manifest)?;
    let base = dir_of(manifest);
    let clips = m
        .utterances
        .iter()
        .map(|u| {
            Ok(NamedClip {
                id: u.id.clone(),
                clip: read_wav(&base.join(&u.audio)).with_context(|| format!("loading audio for {}", u.id))?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let (out, log) = augment_clips(&clips, &noises, &policy, ctx.seed("augment"))?;
    std::fs::create_dir_all(ctx.path("augmented"))?;
    let by_id: BTreeMap<&str, &Utterance> = m.utterances.iter().map(|u| (u.id.as_str(), u)).collect();
    let mut utts = Vec::new();
    for c in &out {
        let rel = format!("augmented/{}.wav", c.id);
        write_wav(&ctx.path(&rel), &c.clip)?;
        let mut u = by_id[c.id.as_str()].clone();
        u.audio = rel;
        utts.push(u);
    }
    Manifest {
        header: m.header,
        utterances: utts,
    }
    .write_path(&ctx.path("augmented_manifest.jsonl"))?;
    write_json(&ctx.path("augment_log.json"), &log)?;
    Ok(())
}

fn split_cmd(ctx: &Ctx, manifest: &Path) -> anyhow::Result<()> {
    let mut spec = ctx.cfg.section(&ctx.cfg.split, "split")?.clone();
    spec.seed = ctx.seed("split");
    let mut m = read_manifest(manifest)?;
    rebase_audio(&mut m.utterances, &dir_of(manifest), &ctx.out)?;
    let out = split(&m.utterances, &spec)?;
    for (name, utts) in &out.splits {
        Manifest {
            header: m.header.clone(),
            utterances: utts.clone(),
        }
        .write_path(&ctx.path(&format!("split_{name}.jsonl")))?;
    }
    if !out.dropped.is_empty() {
        Manifest::new(out.dropped.clone()).write_path(&ctx.path("split_dropped.jsonl"))?;
    }
    write_json(&ctx.path("split_report.json"), &out.report)?;
    for (name, s) in &out.report.per_split {
        println!(
            "{name}: {:.3} h of {:.3} h target ({} utterances, {} speakers)",
            s.hours, s.target_hours, s.utterances, s.speakers
        );
    }
    Ok(())
}

fn mix_cmd(ctx: &Ctx, real: &Path, synthetic: &Path) -> anyhow::Result<()> {
    let mut spec = ctx.cfg.section(&ctx.cfg.mix, "mix")?.clone();
    spec.seed = ctx.seed("mix");
    let mut r = read_manifest(real)?;
    let mut s = read_manifest(synthetic)?;
    rebase_audio(&mut r.utterances, &dir_of(real), &ctx.out)?;
    rebase_audio(&mut s.utterances, &dir_of(synthetic), &ctx.out)?;
    let (utts, report) = mix(&r.utterances, &s.utterances, &spec)?;
    Manifest::new(utts).write_path(&ctx.path("mix_manifest.jsonl"))?;
    write_json(&ctx.path("mix_report.json"), &report)?;
    println!(
        "real {:.3} h + synthetic {:.3} h",
        report.real_hours, report.synthetic_hours
    );
    Ok(())
}

fn eval(ctx: &Ctx, refs: &Path, hyps: &Path, groups: Option<&Path>) -> anyhow::Result<()> {
    let (r, h) = (read_lines(refs)?, read_lines(hyps)?);
    let norm = ctx.normalizer();
    let seed = ctx.seed("eval");
    let report = match groups {
        Some(g) => eval_by_group(&r, &h, &read_lines(g)?, &norm, ctx.iterations(), seed)?,
        None => bootstrap_eval(&r, &h, &norm, ctx.iterations(), seed)?,
    };
    write_json(&ctx.path("eval_report.json"), &report)?;
    println!(
        "WER {:.4} (± {:.4})  CER {:.4} (± {:.4})  n={}",
        report.wer, report.bootstrap.wer_std, report.cer, report.bootstrap.cer_std, report.n_items
    );
    Ok(())
}

fn eval_gender(ctx: &Ctx, manifest: &Path, hyps: &Path) -> anyhow::Result<()> {
    let m = read_manifest(manifest)?;
    let h = read_lines(hyps)?;
    let refs: Vec<String> = m.utterances.iter().map(|u| u.transcript.clone()).collect();
    let groups: Vec<String> = m.utterances.iter().map(|u| u.gender.as_str().to_string()).collect();
    let report = eval_by_group(&refs, &h, &groups, &ctx.normalizer(), ctx.iterations(), ctx.seed("eval-gender"))?;
    write_json(&ctx.path("eval_gender_report.json"), &report)?;
    for (g, r) in &report.per_group {
        println!("{g}: WER {:.4}  CER {:.4}  n={}", r.wer, r.cer, r.n_items);
    }
    Ok(())
}

fn errors(ctx: &Ctx, refs: &Path, hyps: &Path, language: &str, top_k: Option<usize>) -> anyhow::Result<()> {
    let inv = error_inventory(&read_lines(refs)?, &read_lines(hyps)?, &ctx.normalizer(), top_k)?;
    write_json(&ctx.path("error_inventory.json"), &inv)?;
    let rows = adjudication_rows(&inv, language);
    write_adjudication_csv(File::create(ctx.path("adjudication.csv"))?, &rows)?;
    println!("{} missed words, {} sentence pairs for review", inv.rows.len(), rows.len());
    Ok(())
}

fn rate_serve(studies: &[PathBuf], log_dir: &Path, host: &str, port: u16) -> anyhow::Result<()> {
    let studies = studies
        .iter()
        .map(|p| ReviewStudy::load(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Invalid(e.to_string()))?;
    let state = AppState::open(studies, log_dir)?;
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Invalid(format!("bad listen address: {e}")))?;
    runtime()?.block_on(synvox_review::serve(addr, state))?;
    Ok(())
}

fn metric(name: &str) -> anyhow::Result<Metric> {
    name.parse::<Metric>().map_err(|e| Invalid(e.to_string()).into())
}

fn ratings_analyze(ctx: &Ctx, analysis: Analysis) -> anyhow::Result<()> {
    let load = |p: &Path| -> anyhow::Result<_> {
        read_ratings_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?).map_err(Into::into)
    };
    match analysis {
        Analysis::Summary { input, language } => {
            let rows = summarize(&load(&input.ratings)?, &language)?;
            write_summary_csv(File::create(ctx.path("ratings_summary.csv"))?, &rows)?;
            for row in &rows {
                for (m, s) in &row.metrics {
                    println!("{} {} {m}: {}", row.language, row.model_id, s.display());
                }
            }
        }
        Analysis::Anova { input, metric: m } => {
            let table = anova_two_way(&load(&input.ratings)?, metric(&m)?)?;
            write_json(&ctx.path(&format!("anova_{m}.json")), &table)?;
        }
        Analysis::RaterBootstrap {
            input,
            model,
            metric: m,
            raters,
            sentences,
            iterations,
        } => {
            let points = rater_bootstrap(
                &load(&input.ratings)?,
                &model,
                metric(&m)?,
                &raters,
                sentences,
                iterations,
                ctx.seed("rater-bootstrap"),
            )?;
            write_json(&ctx.path("rater_bootstrap.json"), &points)?;
        }
        Analysis::IccGrid {
            input,
            model,
            metric: m,
            raters,
            sentences,
            iterations,
            listwise,
        } => {
            let matrix = RatingMatrix::from_ratings(&load(&input.ratings)?, &model, metric(&m)?, listwise)?;
            let grid = icc_grid(&matrix, &raters, &sentences, iterations, ctx.seed("icc-grid"))?;
            write_json(&ctx.path("icc_grid.json"), &grid)?;
        }
    }
    Ok(())
}

fn import(ctx: &Ctx, input: &Path, origin: &str, tag: &str) -> anyhow::Result<()> {
    let origin = if origin == "synthetic" { Origin::Synthetic } else { Origin::Real };
    let f = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let mut utts = import_csv(f, origin, tag)?;
    rebase_audio(&mut utts, &dir_of(input), &ctx.out)?;
    let n = utts.len();
    Manifest::new(utts).write_path(&ctx.path(&format!("{tag}_manifest.jsonl")))?;
    println!("imported {n} utterances");
    Ok(())
}
