//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Oracles here are written independently of the library code they check.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use adaptaug::backtest::{build_portfolio, metrics, net_returns, DailyPredictions, DayPredictions};
use adaptaug::data::{
    make_financial_splits, sine_vs_sawtooth, stratified_split, synth_returns, write_ucr_tsv, Dataset, ReturnsPanel,
    SplitSpec,
};
use adaptaug::model::{per_sample_loss, Mlp, RmsProp};
use adaptaug::policy::{
    alpha_trim_loss, alpha_trim_select, w_augment_grad_omega, LossMatrix, PolicyConfig, PolicyKind, WeightVector,
};
use adaptaug::rng::RngStream;
use adaptaug::search::{grid_search, SearchPlan};
use adaptaug::trainer::{
    evaluate, expand_batch, rand_augment_choice, train, transform_stream, TrainConfig, Trainer,
};
use adaptaug::transforms::magnitude::tunable_ranges;
use adaptaug::transforms::{
    apply, interpolate_magnitude, resolve, resolve_list, Magnitude, MagnitudeRange, TimeSeries, TransformId,
    TransformSpec, UCR_SET,
};
use adaptaug::Error;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

/// Run a criterion, print its verdict outside the test harness capture and
/// re-raise any failure.
fn criterion(n: u32, name: &str, body: impl FnOnce() -> String) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let secs = start.elapsed().as_secs_f64();
    let line = match &outcome {
        Ok(detail) => format!("PASS criterion {n:>2} {name}: {detail} [{secs:.2}s]\n"),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            format!("FAIL criterion {n:>2} {name}: {msg} [{secs:.2}s]\n")
        }
    };
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    if let Err(e) = outcome {
        std::panic::resume_unwind(e);
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    RngStream::new(seed).rng()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-300)
}

// --- 1 -------------------------------------------------------------------

fn oracle_w_loss(losses: &[Vec<f64>], logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let z: f64 = e.iter().sum();
    let mut total = 0.0;
    for row in losses {
        for (l, ej) in row.iter().zip(&e) {
            total += l * ej / z;
        }
    }
    total / losses.len() as f64
}

#[test]
fn criterion_01_omega_gradient_oracle() {
    criterion(1, "omega gradient vs finite differences", || {
        let start = Instant::now();
        let mut r = rng(101);
        let mut worst: f64 = 0.0;
        let mut worst_sum: f64 = 0.0;
        for _ in 0..60 {
            let b = r.random_range(1..=8);
            let cols = r.random_range(1..=6) + 1;
            let losses: Vec<Vec<f64>> =
                (0..b).map(|_| (0..cols).map(|_| r.random_range(0.0..5.0)).collect()).collect();
            let logits: Vec<f64> = (0..cols).map(|_| r.random_range(-2.0..2.0)).collect();
            let m = LossMatrix::from_rows(&losses).unwrap();
            let g = w_augment_grad_omega(&m, &WeightVector::from_logits(logits.clone()).unwrap()).unwrap();
            let h = 1e-6;
            let fd: Vec<f64> = (0..cols)
                .map(|j| {
                    let mut up = logits.clone();
                    let mut dn = logits.clone();
                    up[j] += h;
                    dn[j] -= h;
                    (oracle_w_loss(&losses, &up) - oracle_w_loss(&losses, &dn)) / (2.0 * h)
                })
                .collect();
            worst = worst.max(rel_err(&g, &fd));
            worst_sum = worst_sum.max(g.iter().sum::<f64>().abs());
        }
        let secs = start.elapsed().as_secs_f64();
        assert!(worst <= 1e-6, "relative error {worst:e}");
        assert!(worst_sum <= 1e-12, "component sum {worst_sum:e}");
        assert!(secs < 5.0, "took {secs}s");
        format!("60 instances, max rel err {worst:.2e}, max |sum| {worst_sum:.2e}")
    });
}

// --- 2 -------------------------------------------------------------------

struct Dims {
    l: usize,
    h: usize,
    c: usize,
}

/// Σ_i w_i · CE_i from flat parameters, written out loop by loop.
fn oracle_weighted_loss(d: &Dims, p: [&[f64]; 4], xs: &[Vec<f64>], ys: &[usize], ws: &[f64]) -> f64 {
    let [w1, b1, w2, b2] = p;
    let mut total = 0.0;
    for ((x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        let hidden: Vec<f64> = (0..d.h)
            .map(|k| {
                let z: f64 = b1[k] + (0..d.l).map(|t| w1[k * d.l + t] * x[t]).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        let logits: Vec<f64> = (0..d.c)
            .map(|j| b2[j] + (0..d.h).map(|k| w2[j * d.h + k] * hidden[k]).sum::<f64>())
            .collect();
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += w * (lse - logits[y]);
    }
    total
}

#[test]
fn criterion_02_model_gradient_oracle() {
    criterion(2, "model backward vs finite differences", || {
        let start = Instant::now();
        let mut r = rng(202);
        let mut worst: f64 = 0.0;
        for inst in 0..25 {
            let d = Dims { l: r.random_range(2..=8), h: r.random_range(2..=5), c: r.random_range(2..=3) };
            let b = r.random_range(1..=4);
            let model = Mlp::new(d.l, d.h, d.c, &RngStream::new(inst));
            let xs: Vec<Vec<f64>> = (0..b).map(|_| (0..d.l).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
            let ys: Vec<usize> = (0..b).map(|_| r.random_range(0..d.c)).collect();
            let ws: Vec<f64> = (0..b).map(|_| r.random_range(0.1..1.0)).collect();
            let cache = model.forward(&xs).unwrap();
            let grads = model.backward(&cache, &ys, &ws).unwrap();
            let base: Vec<Vec<f64>> = model.params.slices().iter().map(|s| s.to_vec()).collect();
            for (t, g) in grads.slices().iter().enumerate() {
                let fd: Vec<f64> = (0..base[t].len())
                    .map(|i| {
                        let h = 1e-5 * base[t][i].abs().max(1.0);
                        let eval = |delta: f64| {
                            let mut ps = base.clone();
                            ps[t][i] += delta;
                            oracle_weighted_loss(&d, [&ps[0], &ps[1], &ps[2], &ps[3]], &xs, &ys, &ws)
                        };
                        (eval(h) - eval(-h)) / (2.0 * h)
                    })
                    .collect();
                worst = worst.max(rel_err(g, &fd));
            }
        }
        let secs = start.elapsed().as_secs_f64();
        assert!(worst <= 1e-5, "relative error {worst:e}");
        assert!(secs < 30.0, "took {secs}s");
        format!("25 instances, max rel err {worst:.2e}")
    });
}

// --- 3 -------------------------------------------------------------------

fn toy_set(n: usize, len: usize, seed: u64) -> Dataset {
    sine_vs_sawtooth(n, len, 8.0, 0.3, seed).unwrap().znormalized()
}

fn degeneracy_config(kind: PolicyKind, freeze: bool) -> TrainConfig {
    let specs = resolve_list(&UCR_SET, Magnitude::Level(5)).unwrap();
    let mut policy = PolicyConfig::new(kind, specs, Magnitude::Level(5), 77).with_alpha(0);
    policy.freeze_weights = freeze;
    let mut cfg = TrainConfig::new(policy, 5);
    cfg.batch_size = 8;
    cfg.optimizer.lr = 1e-2;
    cfg
}

#[test]
fn criterion_03_policy_degeneracy() {
    criterion(3, "frozen W-Augment and alpha=0 equal plain training, bit-exact", || {
        let ds = toy_set(32, 24, 3);
        let init = Mlp::new(24, 8, 2, &RngStream::new(9));
        let wa_cfg = degeneracy_config(PolicyKind::WAugment, true);
        let at_cfg = degeneracy_config(PolicyKind::AlphaTrimmed, false);
        let mut wa = Trainer::new(wa_cfg.clone(), init.clone()).unwrap();
        let mut at = Trainer::new(at_cfg.clone(), init.clone()).unwrap();
        // plain reference: every augmented sample weighted equally
        let mut plain = init.clone();
        let mut opt = RmsProp::new(wa_cfg.optimizer, &plain);
        let cols = wa_cfg.policy.transforms.len();
        let steps = 16;
        for step in 0..steps {
            let (epoch, bi) = (step / 4 + 1, step % 4);
            let batch: Vec<(usize, &TimeSeries)> = (bi * 8..bi * 8 + 8).map(|i| (i, &ds.samples[i])).collect();
            let inputs = expand_batch(&wa_cfg.policy, &batch, epoch, bi).unwrap();
            let labels: Vec<usize> = batch.iter().flat_map(|(_, x)| std::iter::repeat_n(x.label, cols)).collect();
            let cache = plain.forward(&inputs).unwrap();
            let w = vec![1.0 / (8 * cols) as f64; inputs.len()];
            let g = plain.backward(&cache, &labels, &w).unwrap();
            opt.step(&mut plain.params, &g).unwrap();
            wa.step(&batch, epoch, bi).unwrap();
            at.step(&batch, epoch, bi).unwrap();
            assert_eq!(wa.model().params, plain.params, "W-Augment diverged at step {step}");
            assert_eq!(at.model().params, plain.params, "alpha-trimmed diverged at step {step}");
        }
        // the same holds through the full loop with shuffling and scheduling
        let mut a = wa_cfg.clone();
        let mut b = at_cfg.clone();
        a.max_epochs = 6;
        b.max_epochs = 6;
        let ra = train(&a, &ds, &ds, init.clone()).unwrap();
        let rb = train(&b, &ds, &ds, init.clone()).unwrap();
        assert_eq!(ra.model.params, rb.model.params);
        // policy None equals a hand loop over raw batches
        let none_cfg = {
            let mut c = TrainConfig::new(PolicyConfig::none(1), 5);
            c.batch_size = 8;
            c
        };
        let mut none = Trainer::new(none_cfg.clone(), init.clone()).unwrap();
        let mut plain = init.clone();
        let mut opt = RmsProp::new(none_cfg.optimizer, &plain);
        for step in 0..steps {
            let bi = step % 4;
            let batch: Vec<(usize, &TimeSeries)> = (bi * 8..bi * 8 + 8).map(|i| (i, &ds.samples[i])).collect();
            let xs: Vec<&[f64]> = batch.iter().map(|(_, x)| x.values.as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|(_, x)| x.label).collect();
            let cache = plain.forward(&xs).unwrap();
            let g = plain.backward(&cache, &ys, &[1.0 / 8.0; 8]).unwrap();
            opt.step(&mut plain.params, &g).unwrap();
            none.step(&batch, step / 4 + 1, bi).unwrap();
            assert_eq!(none.model().params, plain.params, "policy none diverged at step {step}");
        }
        format!("{steps} steps each, N+1={cols}, B=8, plus a 6-epoch full run")
    });
}

// --- 4 -------------------------------------------------------------------

#[test]
fn criterion_04_trim_algebra() {
    criterion(4, "alpha-trim sizes, bounds and domain errors", || {
        let mut r = rng(404);
        for case in 0..1000 {
            let n1: usize = r.random_range(1..=10);
            // small integer support forces ties
            let losses: Vec<f64> = (0..n1).map(|_| r.random_range(0..4) as f64 * 0.5).collect();
            let alpha = r.random_range(0..n1.div_ceil(2));
            let kept = alpha_trim_select(&losses, alpha).unwrap();
            assert_eq!(kept.len(), n1 - 2 * alpha, "case {case}");
            // brute force: rank by (loss, index) and drop both ends
            let mut order: Vec<usize> = (0..n1).collect();
            order.sort_by(|&a, &b| losses[a].partial_cmp(&losses[b]).unwrap().then(a.cmp(&b)));
            let mut expected = order[alpha..n1 - alpha].to_vec();
            expected.sort();
            assert_eq!(kept, expected, "case {case}");
            let lo = losses.iter().cloned().fold(f64::MAX, f64::min);
            let hi = losses.iter().cloned().fold(f64::MIN, f64::max);
            let m = LossMatrix::from_rows(&[losses.clone()]).unwrap();
            let mean = alpha_trim_loss(&m, alpha).unwrap();
            assert!(lo <= mean && mean <= hi, "case {case}: {mean} outside [{lo}, {hi}]");
            let too_deep = n1.div_ceil(2) + r.random_range(0..3);
            assert!(matches!(alpha_trim_select(&losses, too_deep), Err(Error::Domain(_))));
            assert!(matches!(alpha_trim_loss(&m, too_deep), Err(Error::Domain(_))));
        }
        "1000 random vectors with ties".to_string()
    });
}

// --- 5 -------------------------------------------------------------------

#[test]
fn criterion_05_randaugment_uniformity() {
    criterion(5, "RandAugment uniform over K=9, one transform per batch", || {
        let specs = resolve_list(&UCR_SET, Magnitude::Level(10)).unwrap();
        assert_eq!(specs.len(), 9);
        let policy = PolicyConfig::new(PolicyKind::RandAugment, specs, Magnitude::Level(10), 55);
        let draws = 90_000;
        let mut counts = [0usize; 9];
        for d in 0..draws {
            counts[rand_augment_choice(&policy, d / 300, d % 300).unwrap()] += 1;
        }
        let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
        for f in &freqs {
            assert!((f - 1.0 / 9.0).abs() <= 0.01, "{freqs:?}");
        }
        // each step applies exactly the picked transform, once, to every sample
        let ds = toy_set(16, 32, 8);
        let mut cfg = TrainConfig::new(policy.clone(), 1);
        cfg.batch_size = 16;
        let model = Mlp::new(32, 6, 2, &RngStream::new(1));
        let mut trainer = Trainer::new(cfg, model).unwrap();
        let batch: Vec<(usize, &TimeSeries)> = ds.samples.iter().enumerate().collect();
        for step in 0..20 {
            let before = trainer.model().clone();
            let out = trainer.step(&batch, 1, step).unwrap();
            let j = out.pick.expect("a pick per batch");
            assert_eq!(out.forward_samples, 16);
            let inputs: Vec<Vec<f64>> = batch
                .iter()
                .map(|&(i, x)| apply(&policy.transforms[j], x, &transform_stream(policy.seed, 1, step, i, j)).unwrap().values)
                .collect();
            let probs = before.predict_proba(&inputs).unwrap();
            let labels: Vec<usize> = batch.iter().map(|(_, x)| x.label).collect();
            let expected = per_sample_loss(&probs, &labels).unwrap().iter().sum::<f64>() / 16.0;
            assert_eq!(out.loss, expected, "step {step}");
        }
        format!(
            "{draws} draws, frequencies in [{:.4}, {:.4}]",
            freqs.iter().cloned().fold(1.0, f64::min),
            freqs.iter().cloned().fold(0.0, f64::max)
        )
    });
}

// --- 6 -------------------------------------------------------------------

fn random_series(r: &mut ChaCha8Rng) -> TimeSeries {
    let len = r.random_range(152..=260);
    let scale = r.random_range(0.1..10.0);
    let values = (0..len).map(|_| scale * r.random_range(-1.0..1.0)).collect();
    TimeSeries::new(values, 0).unwrap()
}

fn suite_spec(id: TransformId, r: &mut ChaCha8Rng) -> TransformSpec {
    match resolve(id, Magnitude::Fixed) {
        Ok(s) => s,
        Err(_) => resolve(id, Magnitude::Level(r.random_range(1..=20))).unwrap(),
    }
}

#[test]
fn criterion_06_transform_invariants() {
    criterion(6, "transform invariant suite", || {
        let mut r = rng(606);
        let mut checked = 0;
        for id in TransformId::ALL {
            for case in 0..200 {
                let x = random_series(&mut r);
                let spec = suite_spec(id, &mut r);
                let stream = RngStream::new(r.next_u64()).sample(case);
                let y = apply(&spec, &x, &stream).unwrap();
                assert_eq!(y.len(), x.len(), "{id} length");
                assert!(y.values.iter().all(|v| v.is_finite()), "{id} finite");
                assert_eq!(apply(&spec, &x, &stream).unwrap(), y, "{id} determinism");
                checked += 1;
            }
        }
        for _ in 0..200 {
            let x = random_series(&mut r);
            let s = RngStream::new(r.next_u64());
            let twice = apply(&TransformSpec::Reverse, &apply(&TransformSpec::Reverse, &x, &s).unwrap(), &s).unwrap();
            assert_eq!(twice, x, "reverse involution");
            let q = TransformSpec::Quantize { levels: r.random_range(2..40) };
            let once = apply(&q, &x, &s).unwrap();
            assert_eq!(apply(&q, &once, &s).unwrap(), once, "quantize idempotence");
            let scale = x.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for spec in [
                TransformSpec::Jitter { sigma: 1e-12 },
                TransformSpec::Scaling { sigma: 1e-12 },
                TransformSpec::MagnitudeWarp { knots: 4, sigma: 1e-12 },
            ] {
                let y = apply(&spec, &x, &s).unwrap();
                let dev = y.values.iter().zip(&x.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(dev <= 1e-9 * scale.max(1.0), "{} identity limit: {dev:e}", spec.id());
            }
        }
        // expected bounds of every tunable range
        let table: [(TransformId, &str, MagnitudeRange); 10] = [
            (TransformId::Jitter, "sigma", MagnitudeRange::continuous(0.01, 0.5)),
            (TransformId::TimeWarp, "knots", MagnitudeRange::discrete(&[3.0, 4.0, 5.0])),
            (TransformId::TimeWarp, "sigma", MagnitudeRange::continuous(0.01, 0.5)),
            (TransformId::WindowSlice, "ratio", MagnitudeRange::continuous(0.95, 0.6)),
            (TransformId::WindowWarp, "scale", MagnitudeRange::continuous(0.1, 2.0)),
            (TransformId::Scaling, "sigma", MagnitudeRange::continuous(0.1, 2.0)),
            (TransformId::MagnitudeWarp, "knots", MagnitudeRange::discrete(&[3.0, 4.0, 5.0])),
            (TransformId::MagnitudeWarp, "sigma", MagnitudeRange::continuous(0.1, 2.0)),
            (TransformId::Permutation, "max_segments", MagnitudeRange::discrete(&[3.0, 4.0, 5.0, 6.0])),
            (TransformId::Dropout, "p", MagnitudeRange::continuous(0.05, 0.5)),
        ];
        for (id, name, expected) in &table {
            let ranges = tunable_ranges(*id);
            let (_, range) = ranges.iter().find(|(n, _)| n == name).expect("range present");
            assert_eq!(range, expected, "{id}.{name}");
            let (lo, hi) = match expected {
                MagnitudeRange::Continuous { lo, hi } => (*lo, *hi),
                MagnitudeRange::Discrete(v) => (v[0], v[v.len() - 1]),
            };
            assert_eq!(interpolate_magnitude(1, range).unwrap(), lo, "{id}.{name} at M=1");
            assert_eq!(interpolate_magnitude(20, range).unwrap(), hi, "{id}.{name} at M=20");
        }
        format!("{checked} transform applications, 200 involution/idempotence/limit cases, 10 range bounds")
    });
}

// --- 7 -------------------------------------------------------------------

struct OracleOut {
    net: Vec<f64>,
    avg: f64,
    ann_ret: f64,
    ann_vol: f64,
    down: f64,
}

/// Independent backtest: explicit loops over named stocks.
fn oracle_backtest(probs: &[Vec<f64>], next: &[Vec<f64>], names: &[String], cost_bps: f64) -> OracleOut {
    let s = names.len();
    let mut prev_after_drift = vec![0.0; s];
    let mut net = Vec::new();
    for (p, r) in probs.iter().zip(next) {
        let mut best = 0;
        let mut worst = 0;
        for j in 1..s {
            if p[j] > p[best] || (p[j] == p[best] && names[j] < names[best]) {
                best = j;
            }
            if p[j] < p[worst] || (p[j] == p[worst] && names[j] > names[worst]) {
                worst = j;
            }
        }
        let mut w = vec![0.0; s];
        w[best] = 0.5;
        w[worst] = -0.5;
        let gross: f64 = (0..s).map(|j| w[j] * r[j]).sum();
        let mut turnover = 0.0;
        for j in 0..s {
            turnover += (w[j] - prev_after_drift[j]).abs();
        }
        net.push(gross - cost_bps * 1e-4 * turnover);
        for j in 0..s {
            prev_after_drift[j] = w[j] * (1.0 + r[j]) / (1.0 + gross);
        }
    }
    let n = net.len() as f64;
    let mean = net.iter().sum::<f64>() / n;
    let var = net.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let mut growth = 1.0;
    for x in &net {
        growth *= 1.0 + x;
    }
    let neg: Vec<f64> = net.iter().cloned().filter(|x| *x < 0.0).collect();
    let down = if neg.is_empty() {
        0.0
    } else {
        let m = neg.iter().sum::<f64>() / neg.len() as f64;
        (neg.iter().map(|x| (x - m).powi(2)).sum::<f64>() / neg.len() as f64).sqrt()
    };
    OracleOut {
        avg: mean * 100.0,
        ann_ret: (growth.powf(252.0 / n) - 1.0) * 100.0,
        ann_vol: var.sqrt() * 252f64.sqrt() * 100.0,
        down: down * 252f64.sqrt() * 100.0,
        net,
    }
}

#[test]
fn criterion_07_backtest_oracle() {
    criterion(7, "backtest vs brute force, neutrality, degeneracies", || {
        let mut r = rng(707);
        for case in 0..20 {
            let s = r.random_range(2..=5);
            let days = r.random_range(2..=10);
            let names: Vec<String> = (0..s).map(|j| format!("T{}", (j * 7 + case) % 10)).collect();
            let mut names_sorted = names.clone();
            names_sorted.sort();
            names_sorted.dedup();
            if names_sorted.len() != s {
                continue;
            }
            // coarse probabilities so ties occur
            let probs: Vec<Vec<f64>> = (0..days).map(|_| (0..s).map(|_| r.random_range(0..5) as f64 / 4.0).collect()).collect();
            let next: Vec<Vec<f64>> = (0..days).map(|_| (0..s).map(|_| r.random_range(-0.05..0.05)).collect()).collect();
            let preds = DailyPredictions {
                days: (0..days)
                    .map(|d| DayPredictions {
                        date: chrono::NaiveDate::from_ymd_opt(2021, 1, 1 + d as u32).unwrap(),
                        probs: names.iter().cloned().zip(probs[d].iter().cloned()).collect(),
                    })
                    .collect(),
            };
            let w = build_portfolio(&preds, 1).unwrap();
            for row in &w.weights {
                assert!(row.iter().sum::<f64>().abs() <= 1e-12, "net exposure");
                assert!((row.iter().map(|x| x.abs()).sum::<f64>() - 1.0).abs() <= 1e-12, "gross exposure");
            }
            // map returns onto the portfolio's sorted ticker order
            let aligned: Vec<Vec<Option<f64>>> = next
                .iter()
                .map(|day| {
                    w.tickers.iter().map(|t| Some(day[names.iter().position(|n| n == t).unwrap()])).collect()
                })
                .collect();
            let pnl = net_returns(&w.weights, &aligned, 5.0).unwrap();
            let o = oracle_backtest(&probs, &next, &names, 5.0);
            for (a, b) in pnl.net.iter().zip(&o.net) {
                assert!((a - b).abs() <= 1e-12, "case {case}: net {a} vs {b}");
            }
            let m = metrics(&pnl.net).unwrap();
            assert!((m.avg_daily_return_pct - o.avg).abs() <= 1e-12, "avg");
            assert!((m.annual_return_pct - o.ann_ret).abs() <= 1e-12 * o.ann_ret.abs().max(1.0), "ann ret");
            assert!((m.annual_vol_pct - o.ann_vol).abs() <= 1e-12 * o.ann_vol.max(1.0), "ann vol");
            assert!((m.downside_risk_pct - o.down).abs() <= 1e-12 * o.down.max(1.0), "downside");
            if let Some(ir) = m.information_ratio {
                assert!((ir - o.ann_ret / o.ann_vol).abs() <= 1e-12 * ir.abs().max(1.0), "IR");
            }
            if let Some(dir) = m.downside_information_ratio {
                assert!((dir - o.ann_ret / o.down).abs() <= 1e-12 * dir.abs().max(1.0), "DIR");
            }
        }
        let flat = metrics(&[0.002; 8]).unwrap();
        assert!(flat.ir_degenerate && flat.information_ratio.is_none());
        let up = metrics(&[0.01, 0.02, 0.005, 0.0]).unwrap();
        assert!(up.dir_degenerate && up.downside_information_ratio.is_none() && !up.ir_degenerate);
        for m in [&flat, &up] {
            let fields = [m.avg_daily_return_pct, m.annual_return_pct, m.annual_vol_pct, m.downside_risk_pct];
            assert!(fields.iter().all(|v| v.is_finite()), "{m:?}");
            let j: serde_json::Value = serde_json::to_value(m).unwrap();
            assert!(j["information_ratio"].is_null() || j["information_ratio"].is_f64());
        }
        "20 random instances match to 1e-12; zero-vol and no-negative-day flagged".to_string()
    });
}

// --- 8 -------------------------------------------------------------------

#[test]
fn criterion_08_financial_accounting() {
    criterion(8, "financial splits, window counts, no train-statistic leakage", || {
        let stocks = 50;
        let panel = synth_returns(stocks, 2000, 808).unwrap();
        let spec = SplitSpec::default();
        let splits = make_financial_splits(&panel, &spec).unwrap();
        let starts: Vec<usize> = splits.iter().map(|s| s.start).collect();
        assert_eq!(starts, vec![0, 250, 500, 750, 1000]);
        for sp in &splits {
            assert_eq!(sp.train.len(), (750 - 240) * stocks);
            assert_eq!(sp.test.len(), 250 * stocks);
            let train_returns: Vec<f64> = (sp.start..sp.start + 750)
                .flat_map(|d| (0..stocks).map(move |s| (d, s)))
                .map(|(d, s)| panel.get(d, s).unwrap())
                .collect();
            let n = train_returns.len() as f64;
            let mean = train_returns.iter().sum::<f64>() / n;
            let std = (train_returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!((sp.stats.mean - mean).abs() <= 1e-15 && (sp.stats.std - std).abs() <= 1e-15);
        }
        // perturbing every return after the train period changes neither
        // the statistics nor any train window
        let sp = &splits[2];
        let cut = sp.start + 750;
        let mut rets = Vec::new();
        let mut mask = Vec::new();
        for d in 0..panel.days() {
            for s in 0..stocks {
                let r = panel.get(d, s).unwrap();
                rets.push(if d >= cut { r * 3.0 + 0.01 } else { r });
                mask.push(true);
            }
        }
        let shocked = ReturnsPanel::new(panel.dates.clone(), panel.tickers.clone(), rets, mask).unwrap();
        let sp2 = &make_financial_splits(&shocked, &spec).unwrap()[2];
        assert_eq!(sp.stats, sp2.stats);
        assert_eq!(sp.train, sp2.train);
        for w in sp.train.iter().step_by(97) {
            assert_eq!(sp.window_values(w), sp2.window_values(w));
        }
        // a stock missing a day loses exactly the windows that touch it
        let mut holed = panel.clone();
        holed.mask_out(400, 7);
        let sp3 = &make_financial_splits(&holed, &spec).unwrap()[0];
        let lost = (750 - 240) * stocks - sp3.train.len();
        // windows ending 399..=639 read day 400 as input, the one ending
        // at 399 as its label
        assert_eq!(lost, 639 - 399 + 1);
        format!("5 splits, {} train / {} test windows each", 510 * stocks, 250 * stocks)
    });
}

// --- 9 -------------------------------------------------------------------

#[test]
fn criterion_09_desk_scale_end_to_end() {
    criterion(9, "desk-scale sine vs sawtooth for all four policies", || {
        let full = sine_vs_sawtooth(200, 64, 16.0, 0.3, 901).unwrap().znormalized();
        let test = sine_vs_sawtooth(200, 64, 16.0, 0.3, 902).unwrap().znormalized();
        let (tr, va) = stratified_split(&full, 0.8, 903).unwrap();
        let mut lines = Vec::new();
        for kind in PolicyKind::ALL {
            let specs = resolve_list(&UCR_SET, Magnitude::Level(5)).unwrap();
            let mut policy = PolicyConfig::new(kind, specs, Magnitude::Level(5), 904);
            if kind == PolicyKind::AlphaTrimmed {
                policy.alpha = 1;
            }
            let cols = policy.transforms.len();
            let mut cfg = TrainConfig::new(policy, 905);
            cfg.batch_size = 16;
            cfg.max_epochs = 200;
            cfg.early_stop_patience = 30;
            let start = Instant::now();
            let out = train(&cfg, &tr, &va, Mlp::new(64, 32, 2, &RngStream::new(906))).unwrap();
            let secs = start.elapsed().as_secs_f64();
            let acc = evaluate(&out.model, &test).unwrap().accuracy;
            assert!(acc >= 0.9, "{kind:?} test accuracy {acc}");
            assert!(out.report.stop_epoch <= 200);
            assert!(secs < 60.0, "{kind:?} took {secs}s");
            match kind {
                PolicyKind::WAugment => {
                    assert_eq!(out.report.weight_trace.len(), out.report.steps);
                    for row in &out.report.weight_trace {
                        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                    }
                }
                PolicyKind::AlphaTrimmed => {
                    for row in &out.report.selection_histogram {
                        assert_eq!(row.iter().sum::<usize>(), tr.len() * (cols - 2));
                    }
                }
                _ => {}
            }
            lines.push(format!("{} {:.3} ({}ep, {:.1}s)", kind.name(), acc, out.report.stop_epoch, secs));
        }
        lines.join(", ")
    });
}

// --- 10 ------------------------------------------------------------------

#[test]
fn criterion_10_search_determinism() {
    criterion(10, "M-grid search over 5 splits is reproducible", || {
        let ds = sine_vs_sawtooth(60, 32, 8.0, 0.4, 1001).unwrap().znormalized();
        let mut plan = SearchPlan::new(1002);
        plan.kinds = vec![PolicyKind::WAugment];
        plan.magnitudes = vec![1, 5, 10, 15, 20];
        plan.n_splits = 5;
        plan.hidden = 8;
        plan.train.batch_size = 16;
        plan.train.max_epochs = 15;
        plan.train.optimizer.lr = 5e-3;
        let a = grid_search(&plan, &ds, None).unwrap();
        let b = grid_search(&plan, &ds, None).unwrap();
        assert_eq!(a.run_count, 25);
        assert_eq!(a.runs.len(), 25);
        assert!(a.best.is_some());
        assert_eq!(a.best, b.best);
        let accs = |r: &adaptaug::search::SearchResult| r.runs.iter().map(|x| x.val_accuracy).collect::<Vec<_>>();
        assert_eq!(accs(&a), accs(&b));
        let counts = ds.class_counts();
        for split in &a.split_class_counts {
            for (c, &n_val) in split.iter().enumerate() {
                let exact = 0.2 * counts[c] as f64;
                assert!((n_val as f64 - exact).abs() <= 1.0, "class {c}: {n_val} vs {exact}");
            }
        }
        let best = &a.configs[a.best.unwrap()];
        format!("25 runs, best {} (mean val acc {:.3}) both times", best.label, best.mean_val_accuracy)
    });
}

// --- 11 ------------------------------------------------------------------

#[test]
fn criterion_11_ucr_compatibility() {
    criterion(11, "UCR loader and search subcommand on the bundled fixture", || {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng(1101);
        // assorted label-first files: numeric, negative and textual labels
        for (f, labels) in [vec!["1", "2", "3"], vec!["-1", "1"], vec!["abnormal", "normal"]].iter().enumerate() {
            let len = r.random_range(2..40);
            let mut text = String::new();
            for i in 0..10 {
                text.push_str(labels[i % labels.len()]);
                for _ in 0..len {
                    text.push_str(&format!("\t{}", r.random_range(-100.0..100.0)));
                }
                text.push('\n');
            }
            let path = dir.path().join(format!("set{f}_TRAIN.tsv"));
            std::fs::write(&path, &text).unwrap();
            let ds = adaptaug::data::load_ucr_tsv(&path).unwrap();
            assert_eq!((ds.len(), ds.series_len(), ds.n_classes), (10, len, labels.len()));
            let mut back = Vec::new();
            write_ucr_tsv(&ds, &mut back).unwrap();
            let again = adaptaug::data::parse_ucr_tsv(&back[..], &path, ds.name.clone()).unwrap();
            assert_eq!(again, ds);
        }
        let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/tiny_ucr.tsv");
        let ds = adaptaug::data::load_ucr_tsv(std::path::Path::new(fixture)).unwrap();
        assert_eq!((ds.len(), ds.n_classes), (12, 2));
        let out = dir.path().join("search");
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_adaptaug"))
            .args(["search", "--input", fixture, "--out"])
            .arg(&out)
            .args(["--seed", "11", "--splits", "2", "--epochs", "10", "--set", "batch_size=4", "--set", "hidden=8"])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "dataset,policy,accuracy,optimal_m");
        let policies: Vec<&str> = rows[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(
            policies,
            vec!["none", "waugment", "alpha_trimmed(alpha=1)", "alpha_trimmed(alpha=2)", "randaugment"]
        );
        for row in &rows[1..] {
            let fields: Vec<&str> = row.split(',').collect();
            assert_eq!(fields.len(), 4);
            let acc: f64 = fields[2].parse().unwrap();
            assert!((0.0..=1.0).contains(&acc));
        }
        assert!(out.join("search_result.json").exists());
        format!("3 synthetic TSV layouts round-trip; search wrote {} summary rows", rows.len() - 1)
    });
}
