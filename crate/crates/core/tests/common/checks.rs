//! Check suites shared by the topic test files and the acceptance gate. Each
//! returns a description of the first violation instead of panicking.

use rand::seq::SliceRandom;
use rand::Rng;
use simcom::com::DeepModel;
use simcom::corpus::{CommitRecord, FileChange};
use simcom::eval::{pr_auc, roc_auc, wilcoxon_signed_rank};
use simcom::features::{change_entropy, featurize_corpus, FeatureSplit, FEATURE_NAMES, N_CAT, N_CONT};
use simcom::fusion::{late_fuse, EarlyFusion, EarlyStrategy, LateFusionRule, LateStrategy};
use simcom::nn::{cross_entropy, finite_diff_check, ClassWeights, Classifier, CnnInput, Parameters, TextCnn};
use simcom::util::rng_for;

use super::{history20, micro_data, roc_pairwise, tiny_com, wilcoxon_enumerated, HISTORY20};

pub const GRAD_TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn random_features(rng: &mut impl Rng) -> FeatureSplit {
    FeatureSplit {
        x_cat: (0..N_CAT).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect(),
        x_cont: (0..N_CONT).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    }
}

fn random_vec(n: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Worst relative error per layer, checked in isolation against a random
/// linear readout.
pub fn layer_gradients() -> Vec<(String, f64)> {
    let mut rng = rng_for(11, 0);
    let mut out = Vec::new();

    let cnn = TextCnn::new(Some(12), 4, &[1, 2, 3], 7, &mut rng);
    let toks: Vec<u32> = vec![5, 2, 9, 11, 3, 0, 0, 0];
    let readout = random_vec(cnn.out_dim(), 1.0, &mut rng);
    let loss = |p: &TextCnn| {
        let (z, cache) = p.forward(CnnInput::Tokens(&toks))?;
        let l = z.iter().zip(&readout).map(|(a, b)| a * b).sum::<f64>();
        let mut g = p.zeros_like();
        p.backward(&cache, &readout, &mut g);
        Ok((l, g))
    };
    out.push(("textcnn/tokens".into(), finite_diff_check(&cnn, loss, EPS, usize::MAX, 0).unwrap().max_rel_error));

    let agg = TextCnn::new(None, 5, &[1, 2, 3], 6, &mut rng);
    let rows: Vec<Vec<f64>> = (0..4).map(|_| random_vec(5, 1.0, &mut rng)).collect();
    let readout = random_vec(agg.out_dim(), 1.0, &mut rng);
    let loss = |p: &TextCnn| {
        let (z, cache) = p.forward(CnnInput::Vectors(&rows))?;
        let l = z.iter().zip(&readout).map(|(a, b)| a * b).sum::<f64>();
        let mut g = p.zeros_like();
        p.backward(&cache, &readout, &mut g);
        Ok((l, g))
    };
    out.push(("textcnn/vectors".into(), finite_diff_check(&agg, loss, EPS, usize::MAX, 0).unwrap().max_rel_error));

    let clf = Classifier::new(6, 9, &mut rng);
    let z = random_vec(6, 1.0, &mut rng);
    for label in [0u8, 1] {
        let loss = |p: &Classifier| {
            let (_, cache) = p.forward(&z);
            let (l, dl) = cross_entropy(cache.logits, label, ClassWeights { clean: 1.0, defective: 3.0 });
            let mut g = p.zeros_like();
            p.backward(&cache, dl, &mut g);
            Ok((l, g))
        };
        let r = finite_diff_check(&clf, loss, EPS, usize::MAX, 0).unwrap();
        out.push((format!("classifier/label{label}"), r.max_rel_error));
    }

    for strategy in EarlyStrategy::ALL {
        let dz = 6;
        let fusion = EarlyFusion::new(strategy, dz, 5, 0.4, &mut rng);
        let f = random_features(&mut rng);
        let x = random_vec(dz, 1.0, &mut rng);
        let readout = random_vec(fusion.out_dim(dz), 1.0, &mut rng);
        let value = |p: &EarlyFusion, x: &[f64]| -> f64 {
            let (c, _) = p.forward(x, Some(&f)).unwrap();
            c.iter().zip(&readout).map(|(a, b)| a * b).sum()
        };
        let loss = |p: &EarlyFusion| {
            let (_, cache) = p.forward(&x, Some(&f))?;
            let mut g = p.zeros_like();
            p.backward(&cache, &readout, &mut g);
            Ok((value(p, &x), g))
        };
        let mut worst = finite_diff_check(&fusion, loss, EPS, usize::MAX, 0).unwrap().max_rel_error;
        let (_, cache) = fusion.forward(&x, Some(&f)).unwrap();
        let dx = fusion.backward(&cache, &readout, &mut fusion.zeros_like());
        for i in 0..dz {
            let shifted = |d: f64| {
                let mut y = x.clone();
                y[i] += d;
                value(&fusion, &y)
            };
            let num = (shifted(EPS) - shifted(-EPS)) / (2.0 * EPS);
            worst = worst.max((num - dx[i]).abs() / num.abs().max(dx[i].abs()).max(1e-8));
        }
        out.push((format!("fusion/{strategy}"), worst));
    }
    out
}

/// Worst relative error of the full model on a three-commit batch with
/// class-weighted loss and fixed dropout masks, for the content model and
/// every early-fused variant.
pub fn model_gradients() -> Vec<(String, f64)> {
    let config = tiny_com();
    let data = micro_data(40, 3, &config);
    let batch: Vec<_> = {
        let pos = data.examples.iter().position(|e| e.label == 1).unwrap();
        let negs = data.examples.iter().enumerate().filter(|(_, e)| e.label == 0).map(|(i, _)| i);
        std::iter::once(pos).chain(negs.take(2)).map(|i| data.examples[i].clone()).collect()
    };
    let weights = ClassWeights::balanced(&batch.iter().map(|e| e.label).collect::<Vec<_>>());
    EarlyStrategy::ALL
        .into_iter()
        .map(|strategy| {
            let model = DeepModel::new(&config, data.pre.vocab.len(), strategy, 5).perturbed(0.05, 9);
            let loss = |p: &DeepModel| {
                let mut g = p.zeros_like();
                let mut total = 0.0;
                for (i, ex) in batch.iter().enumerate() {
                    let (_, cache) = p.forward_mode(&ex.encoded, Some(&ex.features), true, 100 + i as u64)?;
                    let (l, dl) = cross_entropy(cache.logits(), ex.label, weights);
                    p.backward(&cache, dl, &mut g);
                    total += l;
                }
                let n = batch.len() as f64;
                g.scale(1.0 / n);
                Ok((total / n, g))
            };
            let r = finite_diff_check(&model, loss, EPS, 40, 1).unwrap();
            let name = if strategy == EarlyStrategy::None { "com".to_string() } else { format!("early/{strategy}") };
            (name, r.max_rel_error)
        })
        .collect()
}

/// AMF attention coefficients are a probability vector.
pub fn amf_coefficients_normalized(trials: usize) -> Result<(), String> {
    let mut rng = rng_for(21, 0);
    for trial in 0..trials {
        let dz = rng.gen_range(2..10);
        let amf = EarlyFusion::new(EarlyStrategy::Amf, dz, rng.gen_range(2..8), 1.0, &mut rng);
        let x = random_vec(dz, rng.gen_range(0.1..5.0), &mut rng);
        let f = random_features(&mut rng);
        let c = amf.amf_coefficients(&x, &f).map_err(|e| e.to_string())?;
        let sum: f64 = c.iter().sum();
        if c.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(format!("trial {trial}: coefficients {c:?} sum {sum}"));
        }
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// GMF scale lies in (0, 1] and leaves `x + h` untouched when the content
/// vector dominates. Returns how many trials hit each regime.
pub fn gmf_scale_bounds(trials: usize) -> Result<(usize, usize), String> {
    let mut rng = rng_for(22, 0);
    let (mut clipped, mut scaled) = (0, 0);
    for trial in 0..trials {
        let dz = rng.gen_range(2..10);
        let beta = rng.gen_range(0.2..2.0);
        let gmf = EarlyFusion::new(EarlyStrategy::Gmf, dz, dz, beta, &mut rng);
        let x = random_vec(dz, 10f64.powf(rng.gen_range(-2.0..1.0)), &mut rng);
        let f = random_features(&mut rng);
        let (alpha, h) = gmf.gmf_scale(&x, &f).map_err(|e| e.to_string())?;
        let (c, _) = gmf.forward(&x, Some(&f)).map_err(|e| e.to_string())?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(format!("trial {trial}: alpha {alpha}"));
        }
        let (xn, hn) = (norm(&x), norm(&h));
        if beta * xn >= hn {
            clipped += 1;
            if alpha != 1.0 || c.iter().zip(x.iter().zip(&h)).any(|(c, (a, b))| *c != a + b) {
                return Err(format!("trial {trial}: expected C = x + h, alpha {alpha}"));
            }
        } else {
            scaled += 1;
            let want = beta * xn / hn;
            if (alpha - want).abs() > 1e-12 {
                return Err(format!("trial {trial}: alpha {alpha}, expected {want}"));
            }
        }
    }
    Ok((clipped, scaled))
}

/// Geometric never exceeds arithmetic late fusion, with equality exactly
/// when every score is the same.
pub fn geometric_below_arithmetic(trials: usize) -> Result<(), String> {
    let mut rng = rng_for(23, 0);
    let geo = LateFusionRule::new(LateStrategy::GeometricAverage);
    let avg = LateFusionRule::new(LateStrategy::SimpleAverage);
    for trial in 0..trials {
        let n = rng.gen_range(2..=5);
        let equal = trial % 10 == 0;
        let first = f64::from(rng.gen_range(1..=20)) / 20.0;
        let s: Vec<f64> = (0..n)
            .map(|_| if equal { first } else { f64::from(rng.gen_range(1..=20)) / 20.0 })
            .collect();
        let all_equal = s.iter().all(|v| *v == s[0]);
        let g = late_fuse(&geo, &s).map_err(|e| e.to_string())?;
        let a = late_fuse(&avg, &s).map_err(|e| e.to_string())?;
        let ok = if all_equal { (g - a).abs() <= 1e-12 } else { g < a - 1e-9 };
        if !ok {
            return Err(format!("trial {trial}: {s:?} geometric {g} arithmetic {a}"));
        }
    }
    Ok(())
}

/// Raising any one score never lowers the fused score, under every rule.
pub fn late_rules_monotone(trials: usize) -> Result<(), String> {
    let mut rng = rng_for(24, 0);
    for trial in 0..trials {
        let n = rng.gen_range(1..=3);
        let s: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let k = rng.gen_range(0..n);
        let mut up = s.clone();
        up[k] = rng.gen_range(s[k]..=1.0);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        for strategy in LateStrategy::ALL {
            if strategy == LateStrategy::None && n != 1 {
                continue;
            }
            let rule = match strategy {
                LateStrategy::WeightedAverage => LateFusionRule::weighted(weights.clone()),
                s => LateFusionRule::new(s),
            };
            let lo = late_fuse(&rule, &s).map_err(|e| e.to_string())?;
            let hi = late_fuse(&rule, &up).map_err(|e| e.to_string())?;
            if hi < lo {
                return Err(format!("trial {trial} {strategy}: {s:?} -> {up:?} lowered {lo} to {hi}"));
            }
        }
    }
    Ok(())
}

/// Scores on a coarse grid so ties are common.
fn random_instance(seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = rng_for(seed, 0);
    let n = rng.gen_range(2..=50);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
    labels[0] = 1;
    labels[1] = 0;
    let grid = rng.gen_range(3..20) as f64;
    let scores = (0..n).map(|_| (rng.gen::<f64>() * grid).floor() / grid).collect();
    (scores, labels)
}

pub fn roc_against_pairs(instances: u64) -> Result<(), String> {
    for seed in 0..instances {
        let (s, l) = random_instance(seed);
        let got = roc_auc(&s, &l).map_err(|e| e.to_string())?;
        let want = roc_pairwise(&s, &l);
        if (got - want).abs() >= 1e-12 {
            return Err(format!("seed {seed}: {got} vs {want}"));
        }
    }
    Ok(())
}

/// Step curves worked out by hand; tied scores form one step.
const PR_FIXTURES: [(&[f64], &[u8], f64); 20] = [
    (&[0.9, 0.8, 0.7], &[1, 0, 1], 5.0 / 6.0),
    (&[0.9, 0.8, 0.7, 0.6], &[1, 1, 0, 0], 1.0),
    (&[0.9, 0.8, 0.7, 0.6], &[0, 0, 1, 1], 5.0 / 12.0),
    (&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0], 1.0 / 2.0),
    (&[0.1], &[1], 1.0),
    (&[0.9, 0.1], &[0, 1], 1.0 / 2.0),
    (&[0.3, 0.3, 0.2, 0.1], &[1, 0, 1, 0], 7.0 / 12.0),
    (&[0.9, 0.8, 0.8, 0.4, 0.2], &[0, 1, 0, 1, 1], 43.0 / 90.0),
    (&[0.6, 0.6, 0.6, 0.1, 0.1], &[1, 1, 0, 1, 0], 29.0 / 45.0),
    (&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[1, 0, 1, 0, 1, 0], 1.0 / 2.0),
    (&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0], &[1, 0, 1, 0, 1, 0], 34.0 / 45.0),
    (&[0.2, 0.4, 0.4, 0.4, 0.9, 0.9], &[0, 1, 0, 0, 1, 0], 9.0 / 20.0),
    (&[0.7, 0.3, 0.5, 0.9, 0.1, 0.6, 0.8], &[1, 0, 0, 1, 0, 1, 0], 29.0 / 36.0),
    (&[0.5, 0.4, 0.3, 0.2, 0.1], &[0, 0, 0, 0, 1], 1.0 / 5.0),
    (&[0.5, 0.4, 0.3, 0.2, 0.1], &[1, 1, 1, 1, 1], 1.0),
    (&[0.8, 0.8, 0.2, 0.2], &[1, 0, 1, 0], 1.0 / 2.0),
    (&[0.95, 0.85, 0.75, 0.65, 0.55, 0.45, 0.35, 0.25], &[1, 1, 0, 1, 0, 0, 1, 0], 93.0 / 112.0),
    (&[3.0, 1.0, 2.0, 3.0, 1.0, 2.0], &[1, 0, 0, 0, 1, 1], 1.0 / 2.0),
    (&[0.0, 0.0, 1.0], &[1, 1, 0], 2.0 / 3.0),
    (&[0.9, 0.7, 0.7, 0.7, 0.2, 0.2, 0.1], &[1, 0, 1, 1, 0, 1, 0], 19.0 / 24.0),
];

/// Number of fixtures checked.
pub fn pr_against_step_curves() -> Result<usize, String> {
    for (i, (s, l, want)) in PR_FIXTURES.iter().enumerate() {
        let got = pr_auc(s, l).map_err(|e| e.to_string())?;
        if (got - want).abs() >= 1e-12 {
            return Err(format!("fixture {i}: {got} vs {want}"));
        }
    }
    Ok(PR_FIXTURES.len())
}

fn wilcoxon_fixtures() -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut v = vec![
        (vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.0; 6]),
        (vec![1.0, -2.0, 3.0, -4.0, 5.0, -6.0], vec![0.0; 6]),
        (vec![0.5, 0.5, -0.5, 0.5, 0.5, -0.5, 0.5], vec![0.0; 7]),
        (vec![0.8, 0.6, 0.7, 0.9, 0.5, 0.65, 0.72, 0.81], vec![0.7, 0.6, 0.6, 0.8, 0.55, 0.6, 0.7, 0.7]),
        (vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0], vec![2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0, 2.0, 8.0]),
        (vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 5.0, 5.0], vec![0.0; 10]),
        (vec![-1.0, -2.0, -3.0, -4.0, -5.0, -6.0, -7.0], vec![0.0; 7]),
    ];
    for seed in 0..40 {
        let mut rng = rng_for(seed, 7);
        let n = rng.gen_range(6..=10);
        let a: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-4i32..=4))).collect();
        let b: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-4i32..=4))).collect();
        if a.iter().zip(&b).filter(|(x, y)| x != y).count() >= 6 {
            v.push((a, b));
        }
    }
    v
}

/// Number of fixtures checked.
pub fn wilcoxon_against_enumeration() -> Result<usize, String> {
    let fixtures = wilcoxon_fixtures();
    for (a, b) in &fixtures {
        let w = wilcoxon_signed_rank(a, b).map_err(|e| e.to_string())?;
        let (t, p) = wilcoxon_enumerated(a, b);
        if !w.exact || w.statistic != t || (w.p_value - p).abs() >= 1e-12 {
            return Err(format!("{a:?} {b:?}: {w:?}, enumeration gives T {t} p {p}"));
        }
    }
    Ok(fixtures.len())
}

pub fn features_match_fixture() -> Result<(), String> {
    let corpus = history20();
    let rows = featurize_corpus(&corpus).map_err(|e| e.to_string())?;
    for ((c, row), (id, want)) in corpus.iter().zip(&rows).zip(HISTORY20) {
        if c.commit_id != id {
            return Err(format!("fixture order: {} vs {id}", c.commit_id));
        }
        let got = row.to_array();
        for (j, name) in FEATURE_NAMES.iter().enumerate() {
            if got[j] != want[j] {
                return Err(format!("{id} {name}: {} vs {}", got[j], want[j]));
            }
        }
    }
    Ok(())
}

/// Scrambles everything after `cut` except ids and timestamps.
pub fn scramble_future(corpus: &[CommitRecord], cut: usize, seed: u64) -> Vec<CommitRecord> {
    let mut out = corpus.to_vec();
    let mut rng = rng_for(seed, 0);
    let mut tail: Vec<(String, String, Vec<FileChange>)> = out[cut..]
        .iter()
        .map(|c| (c.author.clone(), c.message.clone(), c.files.clone()))
        .collect();
    tail.shuffle(&mut rng);
    for (c, (a, m, f)) in out[cut..].iter_mut().zip(tail) {
        c.author = a;
        c.message = m;
        c.files = f;
    }
    out
}

/// Features of every prefix survive any rewrite of the commits after it.
pub fn features_ignore_the_future() -> Result<(), String> {
    let corpus = history20();
    let rows = featurize_corpus(&corpus).map_err(|e| e.to_string())?;
    for cut in 1..corpus.len() {
        for seed in 0..5 {
            let again = featurize_corpus(&scramble_future(&corpus, cut, seed)).map_err(|e| e.to_string())?;
            if again[..cut] != rows[..cut] {
                return Err(format!("prefix of {cut} changed under shuffle seed {seed}"));
            }
        }
    }
    Ok(())
}

pub fn entropy_boundaries() -> Result<(), String> {
    let exact: [(&[usize], f64); 7] = [
        (&[], 0.0),
        (&[9], 0.0),
        (&[0, 0], 0.0),
        (&[7, 0], 0.0),
        (&[3, 3], 1.0),
        (&[4, 4, 4, 4], 1.0),
        (&[1, 1, 1, 1, 1, 1, 1, 1], 1.0),
    ];
    for (m, want) in exact {
        let got = change_entropy(m);
        if got != want {
            return Err(format!("entropy of {m:?} is {got}, expected {want}"));
        }
    }
    let mut rng = rng_for(31, 0);
    for _ in 0..1000 {
        let m: Vec<usize> = (0..rng.gen_range(0..12)).map(|_| rng.gen_range(0..50)).collect();
        let h = change_entropy(&m);
        if !(0.0..=1.0).contains(&h) {
            return Err(format!("entropy of {m:?} is {h}"));
        }
    }
    Ok(())
}
