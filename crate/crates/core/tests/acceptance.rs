//! Acceptance criteria 1-11. Each criterion prints one PASS/FAIL line with
//! its measured values; the process exits non-zero if any fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::thread;
use std::time::Instant;

use emdlot_core::attention::{chapter_attention, feature_attention, modality_attention};
use emdlot_core::cli::main_with_args;
use emdlot_core::cluster::ClusterMoe;
use emdlot_core::data::{
    flatten, smote, synthesize, Dataset, FirmSeries, Label, Sample, Step, SynthConfig, TextFeatures,
    DETERIORATING_FEATURES,
};
use emdlot_core::interpret::{composition_table, feature_heatmaps, HeatmapOptions};
use emdlot_core::metrics::{
    auc_ovr, macro_prf, mean_ap, objective_score, MetricReport, ScoredPrediction,
};
use emdlot_core::model::{Ablation, Model, ModelSpec};
use emdlot_core::numerics::{grad_check, ParamStore, SeededRng, Tensor};
use emdlot_core::objective::{cross_entropy, distribution_loss, separation_loss, total_loss, LossWeights};
use emdlot_core::tlstm::TLstm;
use emdlot_core::trainer::{ablate, run, train_with_scorer, validation_score, TrainConfig, TrainedRun};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn step(quarter: i64, features: Vec<f64>) -> Step {
    let n = features.len();
    Step {
        quarter,
        features,
        delta_t: 0.0,
        observed: vec![true; n],
    }
}

fn sample(id: String, steps: Vec<Step>, text: (Vec<f64>, Vec<f64>), label: Label) -> Sample {
    let mut series = FirmSeries { firm_id: id, steps };
    series.recompute_deltas();
    Sample {
        series,
        text: TextFeatures {
            notice: text.0,
            risk: text.1,
        },
        label,
        synthetic: false,
    }
}

fn gaussian(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

// 1 ---------------------------------------------------------------------

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let (f, t, d_ch) = (6, 4, 3);
    let mut rng = SeededRng::new(11);
    let samples: Vec<Sample> = (0..2)
        .map(|i| {
            let steps = (0..t).map(|q| step(q as i64 * (1 + i as i64), gaussian(&mut rng, f))).collect();
            sample(format!("g{i}"), steps, (gaussian(&mut rng, d_ch), gaussian(&mut rng, d_ch)), Label::ALL[i + 1])
        })
        .collect();
    let spec = ModelSpec {
        num_features: f,
        d_ch,
        embed_size: 5,
        hidden_size: 8,
        num_clusters: 3,
        modal_temperature: 2.6,
        numeric_feature_temperature: 0.9,
        text_feature_temperature: 0.55,
        bypass_decay: false,
        ablation: None,
    };
    let mut m = Model::new(spec, 5).map_err(|e| e.to_string())?;
    let refs: Vec<&Sample> = samples.iter().collect();
    let batch = m.batch(&refs).map_err(|e| e.to_string())?;
    let model = m.clone();
    let err = grad_check(&mut m.store, 1e-5, |s, want| {
        let mut local = model.clone();
        std::mem::swap(&mut local.store, s);
        let mut fwd = local.forward(&batch, None)?;
        let terms = local.loss(&mut fwd, &batch.labels, LossWeights::default());
        if want {
            fwd.g.backward(terms.total, &mut local.store);
        }
        std::mem::swap(&mut local.store, s);
        Ok(fwd.g.value(terms.total).item())
    })
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("max relative error {err:.3e} over {} scalars in {secs:.2}s", m.store.num_scalars());
    ensure(err < 1e-4 && secs < 60.0, detail.clone())?;
    Ok(detail)
}

// 2 ---------------------------------------------------------------------

fn sigm(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Textbook LSTM over the encoder's own weights.
fn reference_lstm(store: &ParamStore, enc: &TLstm, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h_n = enc.hidden_size;
    let mut h = vec![0.0; h_n];
    let mut c = vec![0.0; h_n];
    let mut out = Vec::new();
    for x in xs {
        let pre = |gate: usize, r: usize| {
            let w = store.value(enc.w[gate]);
            let u = store.value(enc.u[gate]);
            let b = store.value(enc.b[gate]);
            let mut s = b.get(0, r);
            for (j, xj) in x.iter().enumerate() {
                s += w.get(r, j) * xj;
            }
            for (j, hj) in h.iter().enumerate() {
                s += u.get(r, j) * hj;
            }
            s
        };
        let mut nh = vec![0.0; h_n];
        let mut nc = vec![0.0; h_n];
        for r in 0..h_n {
            let i = sigm(pre(0, r));
            let f = sigm(pre(1, r));
            let o = sigm(pre(2, r));
            let g = pre(3, r).tanh();
            nc[r] = f * c[r] + i * g;
            nh[r] = o * nc[r].tanh();
        }
        h = nh;
        c = nc;
        out.push(h.clone());
    }
    out
}

fn lstm_equivalence() -> Outcome {
    let mut rng = SeededRng::new(2);
    let mut worst: f64 = 0.0;
    for cfg in 0..100 {
        let d = 1 + rng.below(6);
        let h = 1 + rng.below(9);
        let t = 1 + rng.below(8);
        let mut store = ParamStore::new();
        let mut enc = TLstm::new(&mut store, "enc", d, h, &mut rng);
        enc.bypass_decay = true;
        let xs: Vec<Vec<f64>> = (0..t).map(|_| gaussian(&mut rng, d)).collect();
        let dts: Vec<f64> = (0..t).map(|i| if i == 0 { 0.0 } else { rng.uniform_range(0.0, 24.0) }).collect();
        let (last, states) = enc
            .encode(&store, &format!("cfg{cfg}"), &xs, &dts, &vec![true; t])
            .map_err(|e| e.to_string())?;
        let reference = reference_lstm(&store, &enc, &xs);
        for (s, r) in states.iter().zip(&reference) {
            for (a, b) in s.h.iter().zip(r) {
                worst = worst.max((a - b).abs());
            }
        }
        for (a, b) in last.iter().zip(reference.last().unwrap()) {
            worst = worst.max((a - b).abs());
        }
    }
    let detail = format!("max abs diff {worst:.3e} over 100 configurations");
    ensure(worst < 1e-12, detail.clone())?;
    Ok(detail)
}

// 3 ---------------------------------------------------------------------

fn check_convex(weights: &[f64], items: &[Vec<f64>], agg: &[f64], worst: &mut f64) -> Result<(), String> {
    let sum: f64 = weights.iter().sum();
    *worst = worst.max((sum - 1.0).abs());
    ensure(weights.iter().all(|w| *w >= 0.0), "negative weight")?;
    for (j, a) in agg.iter().enumerate() {
        let lo = items.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
        let hi = items.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
        ensure(*a >= lo - 1e-9 && *a <= hi + 1e-9, format!("aggregate {a} outside [{lo}, {hi}]"))?;
    }
    ensure((sum - 1.0).abs() <= 1e-9, format!("weights sum to {sum}"))
}

fn simplex_suite() -> Outcome {
    let mut rng = SeededRng::new(3);
    let mut worst = [0.0f64; 4];
    let tau = |rng: &mut SeededRng| rng.uniform_range(0.05, 5.0);
    for _ in 0..1000 {
        let n = 1 + rng.below(8);
        let (a, b, w) = (gaussian(&mut rng, n), gaussian(&mut rng, n), gaussian(&mut rng, n));
        let (alpha, h) = chapter_attention(&a, &b, &w, tau(&mut rng)).map_err(|e| e.to_string())?;
        check_convex(&alpha, &[a, b], &h, &mut worst[0])?;
    }
    for _ in 0..1000 {
        let (f, k) = (1 + rng.below(8), 1 + rng.below(6));
        let x: Vec<f64> = (0..f).map(|_| 3.0 * rng.normal()).collect();
        let e = Tensor::from_vec(f, k, gaussian(&mut rng, f * k)).unwrap();
        let w = gaussian(&mut rng, k);
        let (alpha, xt) = feature_attention(&x, &e, &w, tau(&mut rng)).map_err(|e| e.to_string())?;
        let items: Vec<Vec<f64>> = (0..f).map(|i| e.row(i).iter().map(|v| v * x[i]).collect()).collect();
        check_convex(&alpha, &items, &xt, &mut worst[1])?;
    }
    for _ in 0..1000 {
        let n = 1 + rng.below(8);
        let (zt, zn) = (gaussian(&mut rng, n), gaussian(&mut rng, n));
        let (wt, wn) = (gaussian(&mut rng, n), gaussian(&mut rng, n));
        let (beta, z) = modality_attention(&zt, &zn, &wt, &wn, tau(&mut rng)).map_err(|e| e.to_string())?;
        check_convex(&beta, &[zt, zn], &z, &mut worst[2])?;
    }
    for _ in 0..1000 {
        let (dim, k) = (1 + rng.below(6), 1 + rng.below(6));
        let mut store = ParamStore::new();
        let moe = ClusterMoe::new(&mut store, "c", dim, k, &mut rng).map_err(|e| e.to_string())?;
        let z: Vec<f64> = (0..dim).map(|_| 4.0 * rng.normal()).collect();
        let pi = moe.assign(&store, &z).map_err(|e| e.to_string())?;
        let heads = moe.head_probs(&store, &z).map_err(|e| e.to_string())?;
        let y = moe.mixture_predict(&store, &pi, &z).map_err(|e| e.to_string())?;
        check_convex(&pi, &heads, &y, &mut worst[3])?;
        let ys: f64 = y.iter().sum();
        ensure((ys - 1.0).abs() <= 1e-9, format!("mixture sums to {ys}"))?;
    }
    Ok(format!(
        "max |sum-1|: chapter {:.1e}, feature {:.1e}, modality {:.1e}, mixture {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

// 4 ---------------------------------------------------------------------

fn oracle_prf(truth: &[usize], pred: &[usize]) -> [f64; 3] {
    let mut p = [0.0; 3];
    let mut r = [0.0; 3];
    let mut f = [0.0; 3];
    for c in 0..3 {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for (t, y) in truth.iter().zip(pred) {
            match (*t == c, *y == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        p[c] = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        r[c] = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        f[c] = if p[c] + r[c] > 0.0 { 2.0 * p[c] * r[c] / (p[c] + r[c]) } else { 0.0 };
    }
    let m = |v: [f64; 3]| (v[0] + v[1] + v[2]) / 3.0;
    [m(p), m(r), m(f)]
}

/// Fraction of (positive, negative) pairs ordered correctly, ties half.
fn oracle_auc(scores: &[f64], pos: &[bool]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if pos[i] && !pos[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Walks a descending ranking (earlier index first on ties) and averages
/// precision at each hit.
fn oracle_ap(scores: &[f64], pos: &[bool]) -> Option<f64> {
    let n_pos = pos.iter().filter(|p| **p).count();
    if n_pos == 0 {
        return None;
    }
    let mut used = vec![false; scores.len()];
    let mut hits = 0.0;
    let mut sum = 0.0;
    for rank in 1..=scores.len() {
        let mut best: Option<usize> = None;
        for i in 0..scores.len() {
            if !used[i] && best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        if pos[b] {
            hits += 1.0;
            sum += hits / rank as f64;
        }
    }
    Some(sum / n_pos as f64)
}

fn macro_of(v: Vec<Option<f64>>) -> f64 {
    let d: Vec<f64> = v.into_iter().flatten().collect();
    if d.is_empty() {
        0.0
    } else {
        d.iter().sum::<f64>() / d.len() as f64
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = SeededRng::new(4);
    let mut worst: f64 = 0.0;
    for inst in 0..200 {
        let n = 1 + rng.below(20);
        let quantized = inst % 3 == 0;
        let mut preds = Vec::new();
        let mut truth = Vec::new();
        let mut probs = Vec::new();
        for _ in 0..n {
            let raw: Vec<f64> = (0..3)
                .map(|_| {
                    let u = rng.uniform();
                    if quantized {
                        (u * 4.0).floor() + 0.5
                    } else {
                        u + 1e-3
                    }
                })
                .collect();
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let t = rng.below(3);
            preds.push(ScoredPrediction::new(p.clone(), Label::ALL[t]).unwrap());
            truth.push(t);
            probs.push(p);
        }
        let predicted: Vec<usize> = preds.iter().map(|p| p.predicted.index()).collect();
        let (m, _) = macro_prf(&preds).unwrap();
        let o = oracle_prf(&truth, &predicted);
        let (auc, _) = auc_ovr(&preds).unwrap();
        let (map, _) = mean_ap(&preds).unwrap();
        let col = |c: usize| probs.iter().map(|p| p[c]).collect::<Vec<_>>();
        let pos = |c: usize| truth.iter().map(|t| *t == c).collect::<Vec<_>>();
        let oauc = macro_of((0..3).map(|c| oracle_auc(&col(c), &pos(c))).collect());
        let omap = macro_of((0..3).map(|c| oracle_ap(&col(c), &pos(c))).collect());
        for (a, b) in [(m.precision, o[0]), (m.recall, o[1]), (m.f1, o[2]), (auc, oauc), (map, omap)] {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, format!("metric oracle mismatch {worst:.3e}"))?;

    let report = |unique: usize| MetricReport {
        recall: 1.0,
        precision: 1.0,
        f1: 1.0,
        auc_ovr: 1.0,
        map: 1.0,
        unique_preds: unique,
        n_samples: 10,
        per_class: vec![],
        auc_excluded: vec![],
        ap_excluded: vec![],
    };
    let two = objective_score(&report(2));
    let three = objective_score(&report(3));
    let one = objective_score(&report(1));
    ensure(two == 0.5 * 1.0 + 0.3 * (2.0 / 3.0) && (two - 0.7).abs() < 1e-15, format!("objective(2) = {two}"))?;
    ensure(three == 1.0, format!("objective(3) = {three}"))?;
    ensure(one == 0.5 + 0.3 / 3.0, format!("objective(1) = {one}"))?;
    Ok(format!("200 instances, max deviation {worst:.1e}; objective all-ones/2 classes = {two}"))
}

// 5 ---------------------------------------------------------------------

fn smote_protocol() -> Outcome {
    let mut rng = SeededRng::new(5);
    let mut samples = Vec::new();
    for (c, n) in [1565usize, 19, 11].into_iter().enumerate() {
        for i in 0..n {
            let shift = c as f64;
            let steps = (0..3).map(|q| step(q, (0..2).map(|_| shift + rng.normal()).collect())).collect();
            let text = (gaussian(&mut rng, 2), gaussian(&mut rng, 2));
            samples.push(sample(format!("c{c}_{i}"), steps, text, Label::ALL[c]));
        }
    }
    let ds = Dataset {
        samples,
        feature_names: vec!["a".into(), "b".into()],
        d_ch: 2,
    };
    let out = smote(&ds, 5, 9).map_err(|e| e.to_string())?;
    let counts = out.dataset.class_counts();
    ensure(counts == [1565, 1565, 1565], format!("counts {counts:?}"))?;
    let mut worst: f64 = 0.0;
    for o in &out.origins {
        let (b, n) = (&ds.samples[o.base], &ds.samples[o.neighbor]);
        let syn = &out.dataset.samples[o.index];
        ensure(b.label == n.label && syn.label == b.label, "cross-class interpolation")?;
        ensure(o.base != o.neighbor && (0.0..=1.0).contains(&o.t), "degenerate pair")?;
        let (fb, fnb, fs) = (flatten(b, 2), flatten(n, 2), flatten(syn, 2));
        for j in 0..fb.len() {
            let expect = fb[j] + o.t * (fnb[j] - fb[j]);
            worst = worst.max((expect - fs[j]).abs()).max((expect - o.flat[j]).abs());
        }
    }
    ensure(worst <= 1e-9, format!("convex-combination residual {worst:.3e}"))?;
    Ok(format!("1565/19/11 -> {counts:?}; max residual {worst:.1e} over {} synthetic samples", out.origins.len()))
}

// 6 ---------------------------------------------------------------------

fn loss_values() -> Outcome {
    let uniform = distribution_loss(&[vec![0.25; 4], vec![0.25; 4]]).map_err(|e| e.to_string())?;
    let onehot = distribution_loss(&[vec![0.0, 1.0, 0.0]]).map_err(|e| e.to_string())?;
    let sep = separation_loss(&Tensor::from_vec(2, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap());
    ensure(uniform == 0.0, format!("uniform distribution loss {uniform}"))?;
    ensure(onehot == 1.0, format!("one-hot distribution loss {onehot}"))?;
    ensure(sep == -1.0, format!("separation loss {sep}"))?;
    let mut rng = SeededRng::new(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 1 + rng.below(10);
        let k = 1 + rng.below(5);
        let simplex = |rng: &mut SeededRng, m: usize| {
            let v: Vec<f64> = (0..m).map(|_| rng.uniform() + 1e-3).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let y_hat: Vec<Vec<f64>> = (0..n).map(|_| simplex(&mut rng, 3)).collect();
        let pi: Vec<Vec<f64>> = (0..n).map(|_| simplex(&mut rng, k)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
        let cents = Tensor::from_vec(k, 3, gaussian(&mut rng, 3 * k)).unwrap();
        let total = total_loss(&labels, &y_hat, &pi, &cents, LossWeights::ZERO).map_err(|e| e.to_string())?;
        let ce = labels.iter().zip(&y_hat).map(|(y, p)| -p[*y].ln()).sum::<f64>() / n as f64;
        worst = worst.max((total - ce).abs());
        worst = worst.max((cross_entropy(labels[0], &y_hat[0]) + y_hat[0][labels[0]].ln()).abs());
    }
    ensure(worst <= 1e-12, format!("total vs mean CE deviation {worst:.3e}"))?;
    Ok(format!("L_dist uniform {uniform}, one-hot {onehot}; L_sep {sep}; zero-weight total vs CE {worst:.1e}"))
}

// 7 ---------------------------------------------------------------------

fn small_synth(n_firms: usize, seed: u64) -> Dataset {
    let cfg = SynthConfig {
        n_firms,
        priors: [0.6, 0.2, 0.2],
        min_quarters: 6,
        max_quarters: 8,
        missing_prob: 0.0,
        d_ch: 6,
        text_signal_dims: 3,
        marker_dims: 2,
        ..Default::default()
    };
    synthesize(&cfg, seed).unwrap()
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        hidden_size: 6,
        feature_embed_size: 4,
        num_clusters: 2,
        batch_size: 16,
        learning_rate: 0.01,
        warmup_epochs: 3,
        max_epochs: 3,
        ..Default::default()
    }
}

fn early_stopping() -> Outcome {
    let ds = small_synth(40, 7);
    let (train, val) = (ds.with_samples(ds.samples[..30].to_vec()), ds.with_samples(ds.samples[30..].to_vec()));
    let config = TrainConfig {
        patience: 13,
        max_epochs: 100,
        ..tiny_config()
    };
    let out = train_with_scorer(&config, &train, &val, |epoch, m| {
        Ok(match epoch {
            5 => validation_score(m, &val, 64)?,
            e if e < 5 => -10.0 + e as f64,
            _ => -1.0,
        })
    })
    .map_err(|e| e.to_string())?;
    let rescored = validation_score(&out.model, &val, 64).map_err(|e| e.to_string())?;
    let detail = format!(
        "stopped after epoch {} with best epoch {}; restored score {rescored:.6} vs recorded {:.6}",
        out.epochs_run, out.best_epoch, out.best_score
    );
    ensure(out.epochs_run == 18 && out.best_epoch == 5, detail.clone())?;
    ensure((rescored - out.best_score).abs() <= 1e-12, detail.clone())?;
    Ok(detail)
}

// 8 and 11 -------------------------------------------------------------

const DESK_SEEDS: [u64; 3] = [0, 1, 2];

/// Scaled-down training settings that fit a desktop CPU budget.
fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        hidden_size: 16,
        feature_embed_size: 8,
        learning_rate: 0.005,
        batch_size: 32,
        max_epochs: 40,
        patience: 10,
        num_clusters: 4,
        seed,
        ..Default::default()
    }
}

struct DeskRuns {
    data: Dataset,
    full: Vec<TrainedRun>,
    abl3: Vec<TrainedRun>,
    secs: f64,
}

fn desk_runs() -> Result<DeskRuns, String> {
    let start = Instant::now();
    let data = synthesize(&SynthConfig::default(), SynthConfig::default().seed).map_err(|e| e.to_string())?;
    let results: Vec<Result<(TrainedRun, TrainedRun), String>> = thread::scope(|s| {
        let handles: Vec<_> = DESK_SEEDS
            .iter()
            .map(|&seed| {
                let data = &data;
                s.spawn(move || {
                    let full = run(&desk_config(seed), data).map_err(|e| e.to_string())?;
                    let abl = ablate(Ablation::NoAttention, &desk_config(seed), data).map_err(|e| e.to_string())?;
                    Ok((full, abl))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut full = Vec::new();
    let mut abl3 = Vec::new();
    for r in results {
        let (f, a) = r?;
        full.push(f);
        abl3.push(a);
    }
    Ok(DeskRuns {
        data,
        full,
        abl3,
        secs: start.elapsed().as_secs_f64(),
    })
}

fn learnability(runs: &DeskRuns) -> Outcome {
    let mean = |v: &[TrainedRun]| v.iter().map(|r| r.result.report.recall).sum::<f64>() / v.len() as f64;
    let full = mean(&runs.full);
    let abl3 = mean(&runs.abl3);
    let test_labels = &runs.full[0].test_predictions.labels;
    let majority = MetricReport::from_probs(&vec![vec![1.0, 0.0, 0.0]; test_labels.len()], test_labels)
        .map_err(|e| e.to_string())?
        .recall;
    let each: Vec<String> = runs.full.iter().map(|r| format!("{:.3}", r.result.report.recall)).collect();
    let detail = format!(
        "macro recall full {full:.4} [{}], majority {majority:.4}, ABL3 {abl3:.4}; {:.0}s for 6 runs",
        each.join(", "),
        runs.secs
    );
    ensure(full >= 0.80, detail.clone())?;
    ensure(full - majority >= 0.05 && full - abl3 >= 0.05, detail.clone())?;
    ensure(runs.secs < 600.0, detail.clone())?;
    Ok(detail)
}

fn report_integrity(runs: &DeskRuns) -> Outcome {
    let tr = &runs.full[0];
    let p = &tr.test_predictions;
    let table = composition_table(&p.clusters(), &p.labels, tr.model.cluster.k).map_err(|e| e.to_string())?;
    ensure(
        table.total() == tr.prepared.test.len(),
        format!("composition total {} vs {} samples", table.total(), tr.prepared.test.len()),
    )?;

    // Defaulted cohort: every original (non-oversampled) defaulted firm.
    let originals: Vec<Sample> = [&tr.prepared.train, &tr.prepared.val, &tr.prepared.test]
        .iter()
        .flat_map(|d| d.samples.iter().filter(|s| !s.synthetic && s.label == Label::Defaulted).cloned())
        .collect();
    let cohort = tr.prepared.test.with_samples(originals);
    let preds = tr.model.predict(&cohort, 64).map_err(|e| e.to_string())?;
    let ids: HashMap<String, usize> = preds.ids.iter().map(|id| (id.clone(), 0)).collect();
    let grids = feature_heatmaps(&preds.records, &ids, &runs.data.feature_names, HeatmapOptions::default())
        .map_err(|e| e.to_string())?;
    let grid = &grids[0];
    let mut parts = Vec::new();
    let mut ok = true;
    for f in DETERIORATING_FEATURES {
        let (q1, q8) = (grid.cell(f, 1), grid.cell(f, 8));
        match (q1, q8) {
            (Some(a), Some(b)) => {
                ok &= a > b;
                parts.push(format!("{f} Q-1 {a:.4} vs Q-8 {b:.4}"));
            }
            _ => {
                ok = false;
                parts.push(format!("{f} missing from grid"));
            }
        }
    }
    let detail = format!(
        "{} defaulted firms: {}; composition total {} = test size",
        grid.n_samples,
        parts.join(", "),
        table.total()
    );
    ensure(ok && !grid.truncated, detail.clone())?;
    Ok(detail)
}

// 9 ---------------------------------------------------------------------

/// Label is carried only by the gap pattern: defaulted firms report every
/// 9 months, performing firms every 3.
fn gap_task(n: usize, rng: &mut SeededRng, prefix: &str) -> Dataset {
    let samples = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Performing } else { Label::Defaulted };
            let gap = if label == Label::Defaulted { 3 } else { 1 };
            let steps = (0..6).map(|q| step(q * gap, vec![1.0, rng.normal()])).collect();
            sample(format!("{prefix}{i}"), steps, (vec![0.0; 2], vec![0.0; 2]), label)
        })
        .collect();
    Dataset {
        samples,
        feature_names: vec!["level".into(), "noise".into()],
        d_ch: 2,
    }
}

fn val_nll(m: &Model, ds: &Dataset) -> emdlot_core::Result<f64> {
    let p = m.predict(ds, 64)?;
    Ok(p.probs.iter().zip(&p.labels).map(|(pr, l)| cross_entropy(l.index(), pr)).sum::<f64>() / p.len() as f64)
}

fn irregularity_benefit() -> Outcome {
    let mut lines = Vec::new();
    let mut wins = 0;
    for seed in 0..3u64 {
        let mut rng = SeededRng::new(100 + seed);
        let train = gap_task(120, &mut rng, "t");
        let val = gap_task(60, &mut rng, "v");
        let mut losses = [0.0; 2];
        for (slot, bypass) in [false, true].into_iter().enumerate() {
            let config = TrainConfig {
                hidden_size: 8,
                feature_embed_size: 4,
                num_clusters: 2,
                batch_size: 16,
                learning_rate: 0.01,
                max_epochs: 25,
                patience: 25,
                warmup_epochs: 5,
                dropout: 0.0,
                bypass_decay: bypass,
                seed,
                ..Default::default()
            };
            let out = train_with_scorer(&config, &train, &val, |_, m| Ok(-val_nll(m, &val)?)).map_err(|e| e.to_string())?;
            losses[slot] = val_nll(&out.model, &val).map_err(|e| e.to_string())?;
        }
        if losses[0] < losses[1] {
            wins += 1;
        }
        lines.push(format!("seed {seed}: {:.4} vs {:.4}", losses[0], losses[1]));
    }
    let detail = format!("validation NLL T-LSTM vs bypass: {}", lines.join("; "));
    ensure(wins == 3, detail.clone())?;
    Ok(detail)
}

// 10 --------------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let data = root.join("data");
    emdlot_core::data::save_dir(&small_synth(120, 21), &data).map_err(|e| e.to_string())?;
    let cfg = root.join("config.json");
    let config = TrainConfig {
        max_epochs: 4,
        ..tiny_config()
    };
    std::fs::write(&cfg, serde_json::to_string(&config).unwrap()).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        let args = ["emdlot", "train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
        let args: Vec<&str> = args.into_iter().chain(["--config", cfg.to_str().unwrap(), "--seed", "3"]).collect();
        let code = main_with_args(args);
        ensure(code == 0, format!("train exited with {code}"))?;
        let ck = std::fs::read(out.join("best.ckpt")).map_err(|e| e.to_string())?;
        let report = std::fs::read(out.join("metrics.json")).map_err(|e| e.to_string())?;
        outputs.push((ck, report));
    }
    ensure(outputs[0].0 == outputs[1].0, "checkpoints differ")?;
    ensure(outputs[0].1 == outputs[1].1, "metric reports differ")?;
    Ok(format!(
        "checkpoint ({} bytes) and metric report ({} bytes) identical across two runs",
        outputs[0].0.len(),
        outputs[0].1.len()
    ))
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, title: &str, outcome: std::thread::Result<Outcome>| {
        let (status, detail) = match outcome {
            Ok(Ok(d)) => ("PASS", d),
            Ok(Err(d)) => ("FAIL", d),
            Err(p) => (
                "FAIL",
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()),
            ),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!("criterion {n:>2} {status} {title}: {detail}");
    };
    let simple: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "gradient fidelity", gradient_fidelity),
        (2, "standard-LSTM equivalence", lstm_equivalence),
        (3, "simplex and convexity", simplex_suite),
        (4, "metric oracles", metric_oracles),
        (5, "SMOTE protocol", smote_protocol),
        (6, "loss values", loss_values),
        (7, "early stopping", early_stopping),
    ];
    for (n, title, f) in simple {
        report(n, title, catch_unwind(f));
    }
    let desk = catch_unwind(desk_runs);
    match &desk {
        Ok(Ok(runs)) => report(8, "end-to-end learnability", catch_unwind(AssertUnwindSafe(|| learnability(runs)))),
        Ok(Err(e)) => report(8, "end-to-end learnability", Ok(Err(e.clone()))),
        Err(_) => report(8, "end-to-end learnability", Ok(Err("training panicked".into()))),
    }
    report(9, "irregularity benefit", catch_unwind(irregularity_benefit));
    report(10, "determinism", catch_unwind(determinism));
    match &desk {
        Ok(Ok(runs)) => report(11, "report integrity", catch_unwind(AssertUnwindSafe(|| report_integrity(runs)))),
        _ => report(11, "report integrity", Ok(Err("needs the criterion 8 runs".into()))),
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
