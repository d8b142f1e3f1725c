use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use synvox_core::corpus::{Manifest, Utterance};

use crate::Invalid;

/// Non-empty-file lines, trailing newline characters removed.
pub fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f).lines().collect::<Result<_, _>>()?)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Invalid(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> anyhow::Result<Manifest> {
    Manifest::read_path(path).with_context(|| format!("reading manifest {}", path.display()))
}

pub fn dir_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Make audio paths valid relative to `out_dir`. Paths are left alone when
/// the manifest already lives there; otherwise they become absolute.
pub fn rebase_audio(utts: &mut [Utterance], manifest_dir: &Path, out_dir: &Path) -> anyhow::Result<()> {
    let same = std::fs::canonicalize(manifest_dir)? == std::fs::canonicalize(out_dir)?;
    if same {
        return Ok(());
    }
    for u in utts {
        let p = Path::new(&u.audio);
        if p.is_relative() {
            let abs = std::path::absolute(manifest_dir.join(p))?;
            u.audio = abs.to_string_lossy().into_owned();
        }
    }
    Ok(())
}
