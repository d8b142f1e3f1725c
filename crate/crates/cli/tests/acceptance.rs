//! Acceptance checks. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::panic::AssertUnwindSafe;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synvox_core::asr_eval::{
    adjudication_rows, bootstrap_eval, bootstrap_stats, edit_align, edit_distance, error_inventory, item_stats,
    read_adjudication_csv, write_adjudication_csv, EditOp, Normalizer,
};
use synvox_core::audio::Clip;
use synvox_core::augment::{augment_clips, mix_at_snr, set_level, AugmentPolicy, NamedClip};
use synvox_core::corpus::{split, LeftoverPolicy, Origin, SplitSpec, Utterance};
use synvox_core::dedup::uniqueness_curve;
use synvox_core::ratings::{
    anova_two_way, icc_2k, icc_grid, rater_bootstrap, Metric, Modality, RatingMatrix, RatingRecord,
};
use synvox_core::tts_qc::{filter_outliers, rebalance_questions, FilterPolicy, TtsCandidate, Verdict};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("bootstrap unique fraction", bootstrap_unique_fraction),
        ("edit distance vs exhaustive oracle", edit_distance_oracle),
        ("degenerate bootstrap", degenerate_bootstrap),
        ("snr and level fidelity", snr_fidelity),
        ("augment parameter distribution", augment_distribution),
        ("split exclusivity and tolerance", split_exclusivity),
        ("question rebalancing", question_rebalancing),
        ("hallucination filter", hallucination_filter),
        ("icc correctness", icc_correctness),
        ("anova correctness", anova_correctness),
        ("rater bootstrap", rater_bootstrap_widths),
        ("uniqueness curve", uniqueness_curve_check),
        ("pipeline determinism", pipeline_determinism),
        ("adjudication round trip", adjudication_round_trip),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({secs:.2}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} ({secs:.2}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn bootstrap_unique_fraction() -> Outcome {
    let m = 1000;
    let t = Instant::now();
    let refs: Vec<String> = (0..m).map(|i| format!("item {i}")).collect();
    let stats = item_stats(&refs, &refs, &Normalizer::default()).map_err(e)?;
    let b = bootstrap_stats(&stats, 1000, 20240611).map_err(e)?;
    let secs = t.elapsed().as_secs_f64();
    let closed_form = 1.0 - (1.0 - 1.0 / m as f64).powi(m as i32);
    ensure((closed_form - 0.632).abs() < 0.001, || format!("closed form {closed_form}"))?;
    ensure((b.mean_unique_fraction - 0.632).abs() <= 0.01, || {
        format!("mean unique fraction {}", b.mean_unique_fraction)
    })?;
    ensure(secs < 5.0, || format!("took {secs:.2}s"))?;
    Ok(format!("mean unique fraction {:.4} in {secs:.2}s", b.mean_unique_fraction))
}

/// Minimum over every edit path, by plain recursion.
fn exhaustive_distance(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let diag = exhaustive_distance(ra, rb) + usize::from(x != y);
            let del = exhaustive_distance(ra, b) + 1;
            let ins = exhaustive_distance(a, rb) + 1;
            diag.min(del).min(ins)
        }
    }
}

fn edit_distance_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let word = |rng: &mut ChaCha8Rng| -> Vec<u8> {
        let n = rng.random_range(0..=6);
        (0..n).map(|_| b"abc"[rng.random_range(0..3)]).collect()
    };
    let norm = Normalizer::default();
    for i in 0..500 {
        let (r, h) = (word(&mut rng), word(&mut rng));
        let want = exhaustive_distance(&r, &h);
        let got = edit_distance(&r, &h);
        ensure(got == want, || format!("pair {i}: {got} != {want}"))?;

        let al = edit_align(&r, &h);
        ensure(al.distance == want, || format!("pair {i}: alignment distance {}", al.distance))?;
        let (mut rr, mut hh, mut cost) = (Vec::new(), Vec::new(), 0);
        for op in &al.ops {
            match *op {
                EditOp::Match { r: ri, h: hi } => {
                    ensure(r[ri] == h[hi], || format!("pair {i}: bad match"))?;
                    rr.push(ri);
                    hh.push(hi);
                }
                EditOp::Sub { r: ri, h: hi } => {
                    cost += 1;
                    rr.push(ri);
                    hh.push(hi);
                }
                EditOp::Del { r: ri } => {
                    cost += 1;
                    rr.push(ri);
                }
                EditOp::Ins { h: hi } => {
                    cost += 1;
                    hh.push(hi);
                }
            }
        }
        ensure(
            cost == want && rr == (0..r.len()).collect::<Vec<_>>() && hh == (0..h.len()).collect::<Vec<_>>(),
            || format!("pair {i}: alignment does not cover both sides at cost {want}"),
        )?;

        let as_words = |v: &[u8]| v.iter().map(|c| (*c as char).to_string()).collect::<Vec<_>>().join(" ");
        let s = item_stats(&[as_words(&r)], &[as_words(&h)], &norm).map_err(e)?;
        ensure(s[0].word_errors == want, || format!("pair {i}: word errors {}", s[0].word_errors))?;
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.2}s"))?;
    Ok(format!("500 pairs agree in {secs:.2}s"))
}

fn degenerate_bootstrap() -> Outcome {
    let refs = vec!["ina kwana lafiya".to_string(); 40];
    let hyps = vec!["ina kwana lafia".to_string(); 40];
    let r = bootstrap_eval(&refs, &hyps, &Normalizer::default(), 1000, 9).map_err(e)?;
    ensure(r.bootstrap.wer_std == 0.0, || format!("wer std {}", r.bootstrap.wer_std))?;
    ensure(r.bootstrap.wer_mean == r.wer, || format!("mean {} vs {}", r.bootstrap.wer_mean, r.wer))?;
    ensure(r.bootstrap.cer_std == 0.0 && r.bootstrap.cer_mean == r.cer, || "cer not degenerate".into())?;
    Ok(format!("wer {} std 0", r.wer))
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn snr_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let (mut worst_snr, mut worst_level, mut leveled) = (0f64, 0f64, 0);
    for i in 0..100 {
        let amp = rng.random_range(0.01..0.9);
        let signal: Vec<f64> = (0..rng.random_range(800..8000)).map(|_| rng.random_range(-amp..amp)).collect();
        let noise: Vec<f64> = (0..rng.random_range(300..5000)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let snr = rng.random_range(-10.0..60.0);
        let mixed = mix_at_snr(&signal, &noise, snr).map_err(e)?;
        let residual: Vec<f64> = mixed.iter().zip(&signal).map(|(m, s)| m - s).collect();
        let measured = 10.0 * (mean_square(&signal) / mean_square(&residual)).log10();
        worst_snr = worst_snr.max((measured - snr).abs());
        ensure((measured - snr).abs() <= 0.01, || format!("triple {i}: asked {snr} got {measured}"))?;

        let target = rng.random_range(-45.0..-15.0);
        let (out, clamped) = set_level(&signal, target).map_err(e)?;
        if !clamped {
            leveled += 1;
            let level = 10.0 * mean_square(&out).log10();
            worst_level = worst_level.max((level - target).abs());
            ensure((level - target).abs() <= 0.01, || format!("triple {i}: level {level} vs {target}"))?;
        }
    }
    ensure(leveled >= 80, || format!("only {leveled} unclamped level checks"))?;
    Ok(format!(
        "max snr error {worst_snr:.2e} dB, max level error {worst_level:.2e} dB over {leveled} unclamped"
    ))
}

fn augment_distribution() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let clips: Vec<NamedClip> = (0..1000)
        .map(|i| NamedClip {
            id: format!("u{i}"),
            clip: Clip::new((0..400).map(|_| rng.random_range(-0.2..0.2)).collect(), 16000),
        })
        .collect();
    let noises: Vec<NamedClip> = (0..3)
        .map(|i| NamedClip {
            id: format!("n{i}"),
            clip: Clip::new((0..1000).map(|_| rng.random_range(-0.5..0.5)).collect(), 16000),
        })
        .collect();
    let (_, log) = augment_clips(&clips, &noises, &AugmentPolicy::default(), 77).map_err(e)?;
    ensure(log.entries.len() == 1000, || format!("{} entries, {} skipped", log.entries.len(), log.skipped.len()))?;
    let snrs: Vec<f64> = log.entries.iter().filter_map(|x| x.snr).collect();
    ensure(snrs.len() == 1000, || "missing snr in log".into())?;
    let snr_mean = snrs.iter().sum::<f64>() / 1000.0;
    let level_mean = log.entries.iter().map(|x| x.level).sum::<f64>() / 1000.0;
    ensure((snr_mean - 50.0).abs() <= 1.5, || format!("snr mean {snr_mean}"))?;
    ensure((level_mean + 20.0).abs() <= 0.5, || format!("level mean {level_mean}"))?;
    Ok(format!("snr mean {snr_mean:.3} dB, level mean {level_mean:.3} dBFS"))
}

fn transcript_key(t: &str) -> String {
    t.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn split_exclusivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut texts: Vec<String> = (0..200).map(|i| format!("jumla ta {i}")).collect();
    for _ in 0..25 {
        let (a, b) = (rng.random_range(0..200), rng.random_range(0..200));
        texts[b] = if rng.random_bool(0.5) { texts[a].to_uppercase() } else { texts[a].clone() };
    }
    let utts: Vec<Utterance> = (0..200)
        .map(|i| {
            let ms: u64 = rng.random_range(1000..4000);
            Utterance::new(
                format!("u{i:03}"),
                texts[i].clone(),
                format!("u{i:03}.wav"),
                ms * 16,
                16000,
                format!("spk{:03}", rng.random_range(0..110)),
                Origin::Real,
            )
        })
        .collect();
    let total_h: f64 = utts.iter().map(|u| u.num_samples as f64 / 16000.0).sum::<f64>() / 3600.0;
    let mut spec = SplitSpec::new(
        [("train".to_string(), 0.6 * total_h), ("dev".to_string(), 0.15 * total_h), ("test".to_string(), 0.15 * total_h)],
        5,
    );
    spec.leftover = LeftoverPolicy::Drop;
    let out = split(&utts, &spec).map_err(e)?;

    // Independent rescan.
    let mut speaker_home: HashMap<&str, &str> = HashMap::new();
    let mut text_home: HashMap<String, &str> = HashMap::new();
    let mut ids = HashSet::new();
    let mut detail = Vec::new();
    for (name, us) in &out.splits {
        for u in us {
            ensure(ids.insert(u.id.clone()), || format!("{} placed twice", u.id))?;
            let home = *speaker_home.entry(&u.speaker_id).or_insert(name);
            ensure(home == name, || format!("speaker {} in {home} and {name}", u.speaker_id))?;
            let home = *text_home.entry(transcript_key(&u.transcript)).or_insert(name);
            ensure(home == name, || format!("transcript {:?} in {home} and {name}", u.transcript))?;
        }
        let hours = us.iter().map(|u| u.num_samples as f64 / u.sample_rate as f64).sum::<f64>() / 3600.0;
        let target = spec.targets[name];
        let dev = (hours - target) / target;
        detail.push(format!("{name} {:+.2}%", dev * 100.0));
        ensure(dev.abs() <= 0.02, || format!("{name}: {hours:.5} h vs target {target:.5} h ({:+.2}%)", dev * 100.0))?;
    }
    for u in &out.dropped {
        ensure(ids.insert(u.id.clone()), || format!("{} both placed and dropped", u.id))?;
    }
    ensure(ids.len() == 200, || format!("{} of 200 utterances accounted for", ids.len()))?;
    Ok(format!("no overlap; deviations {}", detail.join(", ")))
}

fn question_rebalancing() -> Outcome {
    let items: Vec<String> = (0..100)
        .map(|i| if i % 5 < 2 { format!("tambaya ta {i}?") } else { format!("jumla ta {i}.") })
        .collect();
    let is_q = |s: &String| s.ends_with('?');
    let (out, report) = rebalance_questions(&items, is_q, 0.25, 31).map_err(e)?;
    let q = out.iter().filter(|s| is_q(s)).count();
    let statements: Vec<&String> = out.iter().filter(|s| !is_q(s)).collect();
    ensure(statements.len() == 60, || format!("{} statements kept", statements.len()))?;
    let target_q = 0.25 * out.len() as f64;
    ensure((q as f64 - target_q).abs() <= 1.0, || format!("{q} questions of {}", out.len()))?;
    let positions: Vec<usize> = out.iter().map(|s| items.iter().position(|x| x == s).unwrap()).collect();
    ensure(positions.windows(2).all(|w| w[0] < w[1]), || "order not preserved".into())?;
    Ok(format!("{q} of {} questions, share {:.3}", out.len(), report.share_after))
}

fn hallucination_filter() -> Outcome {
    let cand = |id: String, ratio: f64| TtsCandidate {
        utterance_id: id,
        source_text: "sannu da zuwa".into(),
        audio_path: String::new(),
        retranscript: Some("sannu da zuwa".into()),
        length_ratio: Some(ratio),
        verdict: Verdict::Pending,
    };
    let mut cands: Vec<TtsCandidate> = (0..100).map(|i| cand(format!("c{i}"), 1.0)).collect();
    cands.insert(57, cand("outlier".into(), 3.0));
    let out = filter_outliers(cands, &FilterPolicy::default()).map_err(e)?;
    let removed: Vec<&str> = out.removed.iter().map(|c| c.utterance_id.as_str()).collect();
    ensure(removed == ["outlier"], || format!("removed {removed:?}"))?;
    ensure(out.kept.len() == 100, || format!("kept {}", out.kept.len()))?;
    Ok("only the 3.0 candidate removed".into())
}

/// Shrout-Fleiss ICC(2,k) written out from the two-way mean squares.
fn icc_oracle(x: &[Vec<f64>]) -> Option<f64> {
    let n = x.len() as f64;
    let k = x[0].len() as f64;
    let grand = x.iter().flatten().sum::<f64>() / (n * k);
    let row_means: Vec<f64> = x.iter().map(|r| r.iter().sum::<f64>() / k).collect();
    let col_means: Vec<f64> = (0..x[0].len()).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let ssr = k * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ssc = n * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let sst = x.iter().flatten().map(|v| (v - grand).powi(2)).sum::<f64>();
    let sse = sst - ssr - ssc;
    let msr = ssr / (n - 1.0);
    let msc = ssc / (k - 1.0);
    let mse = sse / ((n - 1.0) * (k - 1.0));
    let denom = msr + (msc - mse) / n;
    (denom.abs() > 1e-12).then(|| (msr - mse) / denom)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

fn icc_correctness() -> Outcome {
    let perfect = vec![vec![2.0; 3], vec![5.0; 3], vec![7.0; 3], vec![3.0; 3]];
    let p = icc_2k(&perfect).map_err(e)?;
    ensure((p - 1.0).abs() < 1e-12, || format!("perfect agreement gave {p}"))?;

    // Row means 8, 5, 2; column means all 5: MSR 27, MSC 0, MSE 1.
    let hand = vec![vec![9.0, 8.0, 7.0], vec![5.0, 5.0, 5.0], vec![1.0, 2.0, 3.0]];
    let h = icc_2k(&hand).map_err(e)?;
    ensure((h - 0.975).abs() < 1e-9, || format!("hand fixture gave {h}, expected 0.975"))?;
    ensure((icc_oracle(&hand).unwrap() - 0.975).abs() < 1e-12, || "oracle disagrees with hand value".into())?;
    let other = vec![vec![6.0, 4.0, 5.0], vec![3.0, 3.0, 1.0], vec![7.0, 5.0, 6.0]];
    let (got, want) = (icc_2k(&other).map_err(e)?, icc_oracle(&other).unwrap());
    ensure((got - want).abs() < 1e-9, || format!("3x3: {got} vs oracle {want}"))?;

    let fixture = vec![
        vec![1.0, 2.0, 1.0],
        vec![3.0, 3.0, 4.0],
        vec![5.0, 6.0, 5.0],
        vec![7.0, 7.0, 6.0],
    ];
    let grid = icc_grid(&RatingMatrix::from_rows(fixture.clone()), &[2, 3], &[2, 3, 4], 20000, 8).map_err(e)?;
    let mut worst = 0f64;
    for cell in &grid.cells {
        let mut vals = Vec::new();
        for rs in subsets(3, cell.n_raters) {
            for ss in subsets(4, cell.n_sentences) {
                let sub: Vec<Vec<f64>> = ss.iter().map(|&s| rs.iter().map(|&r| fixture[s][r]).collect()).collect();
                vals.extend(icc_oracle(&sub));
            }
        }
        let exact = vals.iter().sum::<f64>() / vals.len() as f64;
        let mean = cell.mean_icc.ok_or("cell without defined draws")?;
        worst = worst.max((mean - exact).abs());
        ensure((mean - exact).abs() <= 0.02, || {
            format!("{} raters x {} sentences: {mean} vs enumeration {exact}", cell.n_raters, cell.n_sentences)
        })?;
    }
    Ok(format!("perfect 1.0, 3x3 exact to 1e-9, grid max gap {worst:.4}"))
}

fn text_record(item: &str, rater: &str, model: &str, readability: u8) -> RatingRecord {
    RatingRecord {
        item_id: item.into(),
        rater_id: rater.into(),
        model_id: model.into(),
        modality: Modality::Text,
        readability: Some(readability),
        grammatical: Some(1),
        real_words: Some(1),
        notable_error: Some(0),
        adequacy: Some(5),
        intelligibility: None,
        naturalness_5: None,
    }
}

fn rss(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let xt = x.transpose();
    let beta = (&xt * x).lu().solve(&(&xt * y)).expect("full-rank design");
    (y - x * beta).norm_squared()
}

fn anova_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut recs = Vec::new();
    for (mi, model) in ["gpt", "claude"].iter().enumerate() {
        for item in 0..4 {
            for rater in ["r1", "r2"] {
                recs.push(text_record(&format!("{mi}-{item}"), rater, model, rng.random_range(1..=7)));
            }
        }
    }
    let y = DVector::from_iterator(recs.len(), recs.iter().map(|r| r.readability.unwrap() as f64));
    let col = |f: &dyn Fn(&RatingRecord) -> f64| DVector::from_iterator(recs.len(), recs.iter().map(f));
    let one = col(&|_| 1.0);
    let llm = col(&|r| (r.model_id == "gpt") as u8 as f64);
    let rater = col(&|r| (r.rater_id == "r2") as u8 as f64);
    let full = DMatrix::from_columns(&[one.clone(), llm.clone(), rater.clone()]);
    let rss_full = rss(&full, &y);
    let ss_llm = rss(&DMatrix::from_columns(&[one.clone(), rater]), &y) - rss_full;
    let ss_rater = rss(&DMatrix::from_columns(&[one, llm]), &y) - rss_full;
    let df_res = (recs.len() - 3) as f64;
    let f_llm = ss_llm / (rss_full / df_res);
    let f_rater = ss_rater / (rss_full / df_res);

    let t = anova_two_way(&recs, Metric::Readability).map_err(e)?;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    ensure(close(t.llm.sum_of_squares, ss_llm), || format!("SS llm {} vs {ss_llm}", t.llm.sum_of_squares))?;
    ensure(close(t.rater.sum_of_squares, ss_rater), || format!("SS rater {} vs {ss_rater}", t.rater.sum_of_squares))?;
    ensure(close(t.residual.sum_of_squares, rss_full), || {
        format!("SS residual {} vs {rss_full}", t.residual.sum_of_squares)
    })?;
    ensure(t.llm.f.is_some_and(|f| close(f, f_llm)), || format!("F llm {:?} vs {f_llm}", t.llm.f))?;
    ensure(t.rater.f.is_some_and(|f| close(f, f_rater)), || format!("F rater {:?} vs {f_rater}", t.rater.f))?;

    let flat: Vec<RatingRecord> = recs.iter().map(|r| RatingRecord { readability: Some(4), ..r.clone() }).collect();
    let c = anova_two_way(&flat, Metric::Readability).map_err(e)?;
    let all = [c.llm.sum_of_squares, c.rater.sum_of_squares, c.residual.sum_of_squares, c.total_ss];
    ensure(all.iter().all(|&s| s == 0.0), || format!("constant response SS {all:?}"))?;
    Ok(format!("SS llm {ss_llm:.4}, rater {ss_rater:.4}, residual {rss_full:.4}; constant gives 0"))
}

fn rater_bootstrap_widths() -> Outcome {
    let mut same = Vec::new();
    for s in 0..20 {
        for r in 0..5 {
            same.push(text_record(&format!("s{s}"), &format!("r{r}"), "m", (1 + s % 7) as u8));
        }
    }
    let pts = rater_bootstrap(&same, "m", Metric::Readability, &[1, 2, 3, 4, 5], 20, 500, 4).map_err(e)?;
    for p in &pts {
        ensure(p.ci_width() == 0.0, || format!("identical raters, {} raters: width {}", p.n_raters, p.ci_width()))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut noisy = Vec::new();
    for s in 0..30 {
        for r in 0..10 {
            noisy.push(text_record(&format!("s{s}"), &format!("r{r}"), "m", rng.random_range(1..=7)));
        }
    }
    let pts = rater_bootstrap(&noisy, "m", Metric::Readability, &[1, 2, 4, 8], 30, 2000, 4).map_err(e)?;
    let widths: Vec<f64> = pts.iter().map(|p| p.ci_width()).collect();
    ensure(widths.windows(2).all(|w| w[1] <= w[0]), || format!("widths {widths:?}"))?;
    Ok(format!(
        "identical raters width 0; noisy widths {}",
        widths.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>().join(" ")
    ))
}

fn uniqueness_curve_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pool: Vec<String> = (0..15).map(|i| format!("jumla {i}")).collect();
    let batches: BTreeMap<String, Vec<String>> = (0..5)
        .map(|b| (format!("b{b}"), (0..6).map(|_| pool[rng.random_range(0..15)].clone()).collect()))
        .collect();
    let keyed: Vec<&Vec<String>> = batches.values().collect();
    let curve = uniqueness_curve(&batches, &[1, 2, 3, 4, 5], 10, 3).map_err(e)?;
    for p in &curve.points {
        let rates: Vec<f64> = subsets(5, p.batch_count)
            .iter()
            .map(|s| {
                let all: Vec<&String> = s.iter().flat_map(|&b| keyed[b].iter()).collect();
                let uniq: BTreeSet<&String> = all.iter().copied().collect();
                uniq.len() as f64 / all.len() as f64
            })
            .collect();
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let std = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rates.len() as f64).sqrt();
        ensure(p.exhaustive && p.subsets == rates.len(), || format!("k={} not enumerated", p.batch_count))?;
        ensure((p.mean_unique_rate - mean).abs() < 1e-12 && (p.std - std).abs() < 1e-12, || {
            format!("k={}: {} ± {} vs {mean} ± {std}", p.batch_count, p.mean_unique_rate, p.std)
        })?;
    }

    let pool: Vec<String> = (0..60).map(|i| format!("sentence {i}")).collect();
    let batches: BTreeMap<String, Vec<String>> = (0..12)
        .map(|b| (format!("b{b:02}"), (0..20).map(|_| pool[rng.random_range(0..60)].clone()).collect()))
        .collect();
    let counts: Vec<usize> = (1..=12).collect();
    let curve = uniqueness_curve(&batches, &counts, 300, 3).map_err(e)?;
    let means: Vec<f64> = curve.points.iter().map(|p| p.mean_unique_rate).collect();
    ensure(means.windows(2).all(|w| w[1] <= w[0]), || format!("means {means:?}"))?;
    Ok(format!("5-batch enumeration exact; 12-batch curve {:.3} -> {:.3}", means[0], means[11]))
}

fn pipeline_determinism() -> Outcome {
    let rt = tokio::runtime::Runtime::new().map_err(e)?;
    let stub = rt.block_on(synvox_stubs::spawn(Default::default())).map_err(e)?;
    let dir = tempfile::tempdir().map_err(e)?;
    let cfg = common::pipeline_config(dir.path(), &stub.base_url);
    let noise = common::noise_bank(dir.path());
    let (a, b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    common::run_pipeline(&cfg, &noise, &a);
    common::run_pipeline(&cfg, &noise, &b);
    let (fa, fb) = (common::artifacts(&a), common::artifacts(&b));
    for must in ["pairs.jsonl", "tts_kept.jsonl", "augmented_manifest.jsonl", "split_report.json", "uniq_curve.csv"] {
        ensure(fa.contains_key(std::path::Path::new(must)), || format!("{must} missing"))?;
    }
    ensure(fa.keys().eq(fb.keys()), || "different artifact sets".into())?;
    for (path, bytes) in &fa {
        ensure(&fb[path] == bytes, || format!("{} differs", path.display()))?;
    }
    let wavs = fa.keys().filter(|p| p.extension().is_some_and(|x| x == "wav")).count();
    Ok(format!("{} artifacts ({wavs} wav) byte-identical", fa.len()))
}

fn adjudication_round_trip() -> Outcome {
    let refs: Vec<String> = [
        "za a yi mata aiki gobe",
        "ina kwana yallabai",
        "ɗan uwana ya tafi kasuwa",
        "mun gode da zuwa",
        "yaya aikin gona",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let hyps: Vec<String> = [
        "za'a yi mata aiki gobe",
        "ina kwana yalabai",
        "dan uwana ya tafi kasuwa, da",
        "mun gode da zuwa",
        "yaya aiki gona",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut norm = Normalizer::default();
    norm.diacritic_mode = synvox_core::asr_eval::DiacriticMode::Keep;
    let inv = error_inventory(&refs, &hyps, &norm, None).map_err(e)?;
    let rows = adjudication_rows(&inv, "hausa");
    ensure(!rows.is_empty(), || "no rows exported".into())?;
    let mut sheet = Vec::new();
    write_adjudication_csv(&mut sheet, &rows).map_err(e)?;

    // A reviewer fills the last two columns.
    let mut rdr = csv::Reader::from_reader(sheet.as_slice());
    let header = rdr.headers().map_err(e)?.clone();
    let mut filled = csv::Writer::from_writer(Vec::new());
    filled.write_record(&header).map_err(e)?;
    let mut expected = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(e)?;
        let verdict = if i % 2 == 0 { "spelling variant" } else { "true error" };
        let note = format!("checked by reviewer {i}, \"second pass\"");
        filled
            .write_record([&rec[0], &rec[1], &rec[2], verdict, note.as_str()])
            .map_err(e)?;
        expected.insert((rec[1].to_string(), rec[2].to_string()), (verdict.to_string(), note));
    }
    let filled = filled.into_inner().map_err(e)?;
    let back = read_adjudication_csv(filled.as_slice()).map_err(e)?;
    let exported: BTreeSet<(String, String)> =
        rows.iter().map(|r| (r.evaluation_transcript.clone(), r.model_output.clone())).collect();
    ensure(back.keys().cloned().collect::<BTreeSet<_>>() == exported, || "row keys changed".into())?;
    for (key, row) in &back {
        let (verdict, note) = &expected[key];
        ensure(&row.assessment == verdict && &row.comments == note && row.language == "hausa", || {
            format!("row {key:?} lost its review")
        })?;
    }
    Ok(format!("{} rows keyed by (transcript, output) survive the round trip", back.len()))
}
