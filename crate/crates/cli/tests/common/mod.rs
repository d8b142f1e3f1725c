#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synvox_core::audio::{write_wav, Clip};

pub fn synvox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synvox"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("synvox binary runs")
}

pub fn check(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn pipeline_config(dir: &Path, base_url: &str) -> PathBuf {
    let endpoint = |name: &str, kind: &str| {
        format!(
            "[endpoints.{name}]\nkind = \"{kind}\"\nbase_url = \"{base_url}\"\nmodel_id = \"stub-{kind}\"\n\
             max_parallel = 4\nmax_retries = 2\ntimeout = 10.0\nbackoff = {{ base_ms = 1, cap_ms = 5 }}\n\n"
        )
    };
    let text = format!(
        "seed = 11\n\n{}{}{}\
         [generation]\nlanguage = {{ tag = \"ha\", name = \"Hausa\" }}\ntotal_target = 80\n\
         sentences_per_request = 10\ncreated_at = \"2025-03-01T12:00:00Z\"\n\n\
         [filter]\nendpoint = \"asr\"\nquestion_share_target = 0.25\n\n\
         [augment]\nsnr_mean = 30.0\n\n\
         [split]\ntargets = {{ train = 0.004, test = 0.001 }}\nexclusive_speakers = false\nleftover = \"drop\"\n\n\
         [uniq_curve]\nbatch_counts = [1, 2, 4]\nsubsamples = 50\n",
        endpoint("llm", "llm"),
        endpoint("tts", "tts"),
        endpoint("asr", "asr"),
    );
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

pub fn noise_bank(dir: &Path) -> PathBuf {
    let d = dir.join("noise");
    std::fs::create_dir_all(&d).unwrap();
    for (i, name) in ["babble", "fan"].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let samples: Vec<f64> = (0..8000).map(|_| rng.random_range(-0.3..0.3)).collect();
        write_wav(&d.join(format!("{name}.wav")), &Clip::new(samples, 16000)).unwrap();
    }
    d
}

/// Text generation through to split, all artifacts in `out`.
pub fn run_pipeline(config: &Path, noise: &Path, out: &Path) {
    let cfg = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    let p = |name: &str| out.join(name).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["gen-text".into()],
        vec!["dedup".into(), "--input".into(), p("pairs.jsonl")],
        vec!["uniq-curve".into(), "--input".into(), p("pairs.jsonl")],
        vec!["rebalance".into(), "--input".into(), p("unique.jsonl")],
        vec!["synth".into(), "--input".into(), p("rebalanced.jsonl")],
        vec![
            "tts-filter".into(),
            "--candidates".into(),
            p("tts_candidates.jsonl"),
            "--manifest".into(),
            p("synth_manifest.jsonl"),
        ],
        vec![
            "augment".into(),
            "--manifest".into(),
            p("filtered_manifest.jsonl"),
            "--noise-dir".into(),
            noise.to_string_lossy().into_owned(),
        ],
        vec!["split".into(), "--manifest".into(), p("augmented_manifest.jsonl")],
    ];
    for step in steps {
        let mut args: Vec<&str> = vec!["--config", cfg, "--out-dir", o];
        args.extend(step.iter().map(String::as_str));
        check(&synvox(&args));
    }
}

/// Every file under `dir` except the run log, by relative path.
pub fn artifacts(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().is_some_and(|n| n != "run_log.jsonl") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
