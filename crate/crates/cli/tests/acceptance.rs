//! Shipping gate: one integration test per release criterion, numbered
//! `acceptance_01` through `acceptance_09`. Running
//! `cargo test --test acceptance` prints exactly one pass/fail line per
//! criterion. Every numeric check is against an oracle implemented here,
//! independently of the library code under test.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use langpanel::coherence::{pair_turns, summarize};
use langpanel::corpus::{lexical_counts, Group, Scene, Speaker, Turn};
use langpanel::embed::{cosine, remove_first_pc, TurnVector};
use langpanel::learn::{
    logistic_fit, loocv_regress, loocv_regress_explicit, nb_fit, ols_fit, roc_auc,
    stepwise_select, trapezoid_auc, Dataset, DEFAULT_MIN_IMPROVEMENT,
};
use langpanel::lexical::{
    brunet, density_ratios, honore, mattr, mls, ttr, FunctionTagSet, LexicalError,
};
use langpanel::pipeline::{
    canonical_feature_names, extract_corpus, load_corpus_dir, read_table, write_table,
    EncoderKind, ExtractConfig, FeaturePanel,
};
use langpanel::syntax::{parse_bracketed, tree_height, yngve_depths};
use langpanel::synth::{
    default_profiles, generate_with, save_profiles, GenerateOptions, GroupProfile, ScoreWeights,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative closeness with a floor of 1 so near-zero values compare absolutely.
fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// Criterion 1: feature-count contract and per-subject extraction runtime.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_feature_count_contract_and_runtime() {
    // d = 50, 100 topics x 100 words = a 10_000-word vocabulary.
    let dir = tempfile::tempdir().unwrap();
    let options = GenerateOptions {
        n_per_group: 2,
        seed: 401,
        dim: 50,
        topics: 100,
        words_per_topic: 100,
    };
    generate_with(&default_profiles(), &options, dir.path()).unwrap();
    let corpus = load_corpus_dir(dir.path()).unwrap();
    let resources = corpus.resources();

    // All three encoders: 3 x 21 coherence features + 10 complexity = 73.
    let config = ExtractConfig::default();
    let names = canonical_feature_names(&config);
    assert_eq!(names.len(), 73, "canonical three-encoder panel width");
    assert_eq!(
        names.iter().collect::<HashSet<_>>().len(),
        73,
        "feature names must be unique"
    );

    let started = Instant::now();
    let outcome = extract_corpus(&corpus.transcripts, &resources, &config).unwrap();
    let elapsed = started.elapsed();
    assert!(
        outcome.failures.is_empty(),
        "extraction failures: {:?}",
        outcome.failures
    );
    assert_eq!(outcome.panels.len(), 4);
    for panel in &outcome.panels {
        assert_eq!(panel.names(), names, "{}: feature names", panel.subject_id);
        for (name, value) in &panel.features {
            assert!(
                value.is_finite(),
                "{}/{name} is not finite: {value}",
                panel.subject_id
            );
        }
    }
    let budget = Duration::from_secs(outcome.panels.len() as u64);
    assert!(
        elapsed < budget,
        "extraction took {elapsed:?} for {} subjects (budget 1 s each)",
        outcome.panels.len()
    );

    // With k encoders the panel has 21k + 10 features.
    for (encoders, expect) in [
        (vec![EncoderKind::Bow], 31usize),
        (vec![EncoderKind::Bow, EncoderKind::Sif], 52),
    ] {
        let config = ExtractConfig {
            encoders,
            ..ExtractConfig::default()
        };
        assert_eq!(canonical_feature_names(&config).len(), expect);
        let outcome = extract_corpus(&corpus.transcripts, &resources, &config).unwrap();
        assert!(outcome.failures.is_empty());
        for panel in &outcome.panels {
            assert_eq!(panel.features.len(), expect);
            assert!(panel.features.iter().all(|(_, v)| v.is_finite()));
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 2: lexical formulas against brute-force oracles.
// ---------------------------------------------------------------------------

fn oracle_counts<S: AsRef<str>>(tokens: &[S]) -> (usize, usize, usize) {
    let mut freq = std::collections::BTreeMap::<&str, usize>::new();
    for t in tokens {
        *freq.entry(t.as_ref()).or_insert(0) += 1;
    }
    let v1 = freq.values().filter(|&&c| c == 1).count();
    (tokens.len(), freq.len(), v1)
}

fn oracle_mattr(tokens: &[String], window: usize) -> f64 {
    if tokens.len() < window {
        let (n, v, _) = oracle_counts(tokens);
        return v as f64 / n as f64;
    }
    let windows = tokens.len() - window + 1;
    let mut acc = 0.0;
    for start in 0..windows {
        let distinct: HashSet<&str> = tokens[start..start + window]
            .iter()
            .map(|s| s.as_str())
            .collect();
        acc += distinct.len() as f64 / window as f64;
    }
    acc / windows as f64
}

#[test]
fn acceptance_02_lexical_formula_oracles() {
    let mut rng = rng(402);
    let tol = 1e-12;
    for round in 0..1000 {
        let vocab = rng.random_range(1..=50usize);
        let len = rng.random_range(1..=400usize);
        let tokens: Vec<String> = (0..len)
            .map(|_| format!("w{}", rng.random_range(0..vocab)))
            .collect();
        let counts = lexical_counts(&tokens);
        let (n, v, v1) = oracle_counts(&tokens);
        assert_eq!((counts.n, counts.v, counts.v1), (n, v, v1), "round {round}");

        let got = ttr(&counts).unwrap();
        assert!(close_rel(got, v as f64 / n as f64, tol), "ttr round {round}");

        let got = brunet(&counts).unwrap();
        let want = (n as f64).powf((v as f64).powf(-0.165));
        assert!(close_rel(got, want, tol), "brunet round {round}: {got} vs {want}");

        if v1 == v {
            assert!(
                matches!(honore(&counts), Err(LexicalError::AllHapax { .. })),
                "honore must reject an all-hapax text"
            );
        } else {
            let got = honore(&counts).unwrap();
            let want = 100.0 * ((n as f64) / (1.0 - v1 as f64 / v as f64)).ln();
            assert!(close_rel(got, want, tol), "honore round {round}: {got} vs {want}");
        }

        let window = rng.random_range(1..=60usize);
        let (got, fallback) = mattr(&tokens, window).unwrap();
        assert_eq!(fallback, tokens.len() < window, "mattr fallback flag");
        let want = oracle_mattr(&tokens, window);
        assert!(close_rel(got, want, tol), "mattr round {round}: {got} vs {want}");
    }

    // Degenerate input: every type a hapax legomenon.
    for len in 1..=20usize {
        let tokens: Vec<String> = (0..len).map(|i| format!("solo{i}")).collect();
        let counts = lexical_counts(&tokens);
        assert!(matches!(
            honore(&counts),
            Err(LexicalError::AllHapax { v }) if v == len
        ));
    }

    // Density ratios: function-word and interjection proportions.
    let tagset = FunctionTagSet::penn_default();
    let tag_pool = ["NN", "VB", "JJ", "RB", "DT", "IN", "CC", "TO", "PRP", "UH"];
    for round in 0..1000 {
        let len = rng.random_range(1..=200usize);
        let tagged: Vec<(String, &str)> = (0..len)
            .map(|i| {
                let tag = tag_pool[rng.random_range(0..tag_pool.len())];
                (format!("tok{i}"), tag)
            })
            .collect();
        let (func_w, uh_w) = density_ratios(&tagged, &tagset).unwrap();
        let func = tagged.iter().filter(|(_, t)| tagset.contains(t)).count();
        let uh = tagged.iter().filter(|(_, t)| *t == "UH").count();
        assert!(
            close_rel(func_w, func as f64 / len as f64, tol),
            "func/w round {round}"
        );
        assert!(
            close_rel(uh_w, uh as f64 / len as f64, tol),
            "uh/w round {round}"
        );
    }

    // Mean length of sentence, with empty renderings skipped.
    for round in 0..1000 {
        let count = rng.random_range(1..=12usize);
        let mut sentences = Vec::new();
        let mut lengths = Vec::new();
        for _ in 0..count {
            let words = rng.random_range(1..=15usize);
            let sentence: Vec<String> =
                (0..words).map(|_| format!("v{}", rng.random_range(0..30))).collect();
            lengths.push(words);
            sentences.push(sentence.join(" "));
        }
        if rng.random_range(0..3) == 0 {
            sentences.push(".".to_string()); // tokenizes to nothing; must be skipped
        }
        let got = mls(&sentences).unwrap();
        let want = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
        assert!(close_rel(got, want, tol), "mls round {round}: {got} vs {want}");
    }
}

// ---------------------------------------------------------------------------
// Criterion 3: pairing examples, summary-statistics oracle, cosine suite.
// ---------------------------------------------------------------------------

fn interpolate(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

/// (min, max, mean, median, stdev, p90, p10) computed directly from a sorted copy.
fn oracle_stats(scores: &[f64]) -> [f64; 7] {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    let mean = s.iter().sum::<f64>() / n as f64;
    let stdev = if n == 1 {
        0.0
    } else {
        (s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    [
        s[0],
        s[n - 1],
        mean,
        interpolate(&s, 0.5),
        stdev,
        interpolate(&s, 0.9),
        interpolate(&s, 0.1),
    ]
}

fn nonzero_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        if norm(&v) > 1e-6 {
            return v;
        }
    }
}

#[test]
fn acceptance_03_pairing_summarize_and_cosine() {
    let scene = |turns: Vec<Turn>| Scene { scene_id: 1, turns };
    let a = |t: &str| Turn::new(Speaker::Assessor, t);
    let s = |t: &str| Turn::new(Speaker::Subject, t);

    // Alternating turns: each question pairs with the reply that follows it.
    let pairs = pair_turns(&scene(vec![
        a("how are you"),
        s("fine"),
        a("and today"),
        s("better now"),
    ]));
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[0].0.tokens, ["how", "are", "you"]);
    assert_eq!(pairs[0].0.source_indices, [0]);
    assert_eq!(pairs[0].1.tokens, ["fine"]);
    assert_eq!(pairs[0].1.source_indices, [1]);
    assert_eq!(pairs[1].0.tokens, ["and", "today"]);
    assert_eq!(pairs[1].1.tokens, ["better", "now"]);

    // Consecutive same-speaker turns merge (token concatenation) before pairing.
    let pairs = pair_turns(&scene(vec![
        a("first part"),
        a("second part"),
        s("one reply"),
    ]));
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].0.tokens, ["first", "part", "second", "part"]);
    assert_eq!(pairs[0].0.source_indices, [0, 1]);
    assert_eq!(pairs[0].1.tokens, ["one", "reply"]);
    assert_eq!(pairs[0].1.source_indices, [2]);

    // A leading subject turn is unpaired and a final question has no reply.
    let pairs = pair_turns(&scene(vec![s("unprompted remark"), a("closing question")]));
    assert!(pairs.is_empty());

    // Summary statistics against a sort-based oracle.
    let mut rng = rng(403);
    for round in 0..1000 {
        let n = rng.random_range(1..=60usize);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let stats = summarize(&scores).unwrap();
        let got = [
            stats.min, stats.max, stats.mean, stats.median, stats.stdev, stats.p90, stats.p10,
        ];
        let want = oracle_stats(&scores);
        let stat_names = ["min", "max", "mean", "median", "stdev", "p90", "p10"];
        for k in 0..7 {
            assert!(
                (got[k] - want[k]).abs() <= 1e-12,
                "round {round} {}: {} vs {}",
                stat_names[k],
                got[k],
                want[k]
            );
        }
    }

    // Cosine: symmetry (bitwise), bounds, and positive-scale invariance.
    for round in 0..10_000 {
        let dim = rng.random_range(1..=20usize);
        let a = nonzero_vec(&mut rng, dim);
        let b = nonzero_vec(&mut rng, dim);
        let ab = cosine(&a, &b).unwrap();
        let ba = cosine(&b, &a).unwrap();
        assert_eq!(ab.to_bits(), ba.to_bits(), "round {round}: symmetry");
        assert!(ab.abs() <= 1.0 + 1e-12, "round {round}: bound {ab}");
        let alpha: f64 = rng.random_range(0.1..10.0);
        let beta: f64 = rng.random_range(0.1..10.0);
        let a2: Vec<f64> = a.iter().map(|x| x * alpha).collect();
        let b2: Vec<f64> = b.iter().map(|x| x * beta).collect();
        let scaled = cosine(&a2, &b2).unwrap();
        assert!(
            (scaled - ab).abs() <= 1e-10,
            "round {round}: scale invariance {scaled} vs {ab}"
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 4: first-principal-component removal contract.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_first_pc_removal() {
    let mut rng = rng(404);

    // After removal every valid output is orthogonal to the returned
    // direction; invalid rows pass through untouched.
    for round in 0..30 {
        let n = rng.random_range(2..=40usize);
        let dim = rng.random_range(2..=30usize);
        let mut batch: Vec<TurnVector> = (0..n)
            .map(|_| TurnVector {
                vector: nonzero_vec(&mut rng, dim),
                valid: true,
            })
            .collect();
        for v in batch.iter_mut().skip(2) {
            if rng.random_range(0..5usize) == 0 {
                v.valid = false;
            }
        }
        let before = batch.clone();
        let direction = remove_first_pc(&mut batch).unwrap();
        for (i, v) in batch.iter().enumerate() {
            if v.valid {
                let dot: f64 = v.vector.iter().zip(&direction).map(|(a, b)| a * b).sum();
                assert!(
                    dot.abs() < 1e-8,
                    "round {round}: residual projection {dot:e}"
                );
            } else {
                assert_eq!(v.vector, before[i].vector, "round {round}: invalid row moved");
            }
        }
    }

    // A rank-1 batch collapses to numerically zero vectors.
    for round in 0..20 {
        let dim = rng.random_range(2..=30usize);
        let n = rng.random_range(2..=20usize);
        let mut axis = nonzero_vec(&mut rng, dim);
        let scale = norm(&axis);
        for x in &mut axis {
            *x /= scale;
        }
        let mut batch: Vec<TurnVector> = (0..n)
            .map(|_| {
                let mag = rng.random_range(0.5..3.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                TurnVector {
                    vector: axis.iter().map(|x| x * mag).collect(),
                    valid: true,
                }
            })
            .collect();
        let norms_before: Vec<f64> = batch.iter().map(|v| norm(&v.vector)).collect();
        remove_first_pc(&mut batch).unwrap();
        for (v, n0) in batch.iter().zip(&norms_before) {
            let n1 = norm(&v.vector);
            assert!(
                n1 < 1e-8 * n0,
                "round {round}: rank-1 residual {n1:e} vs input norm {n0:e}"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: Yngve depths and tree height vs an independent implementation.
// ---------------------------------------------------------------------------

enum Node {
    Leaf { tag: String, word: String },
    Internal { label: String, kids: Vec<Node> },
}

fn random_node(rng: &mut ChaCha8Rng, depth: usize) -> Node {
    let labels = ["S", "NP", "VP", "PP", "ADJP", "X"];
    let tags = ["NN", "VB", "DT", "JJ", "IN", "UH"];
    if depth >= 4 || rng.random_range(0..100) < 35 {
        Node::Leaf {
            tag: tags[rng.random_range(0..tags.len())].to_string(),
            word: format!("w{}", rng.random_range(0..400)),
        }
    } else {
        let arity = rng.random_range(1..=4usize);
        Node::Internal {
            label: labels[rng.random_range(0..labels.len())].to_string(),
            kids: (0..arity).map(|_| random_node(rng, depth + 1)).collect(),
        }
    }
}

fn render(node: &Node) -> String {
    match node {
        Node::Leaf { tag, word } => format!("({tag} {word})"),
        Node::Internal { label, kids } => {
            let inner: Vec<String> = kids.iter().map(render).collect();
            format!("({label} {})", inner.join(" "))
        }
    }
}

fn oracle_yngve(node: &Node, acc: u64, out: &mut Vec<u64>) {
    match node {
        Node::Leaf { .. } => out.push(acc),
        Node::Internal { kids, .. } => {
            let k = kids.len();
            for (i, kid) in kids.iter().enumerate() {
                oracle_yngve(kid, acc + (k - 1 - i) as u64, out);
            }
        }
    }
}

fn oracle_height(node: &Node) -> usize {
    match node {
        Node::Leaf { .. } => 1,
        Node::Internal { kids, .. } => 1 + kids.iter().map(oracle_height).max().unwrap(),
    }
}

#[test]
fn acceptance_05_yngve_and_height() {
    let tree = parse_bracketed("(S (NP (DT the) (NN dog)) (VP (VBD barked)))").unwrap();
    assert_eq!(yngve_depths(&tree), vec![2, 1, 0]);
    assert_eq!(tree_height(&tree), 3);

    let mut rng = rng(405);
    for _ in 0..1000 {
        let node = random_node(&mut rng, 0);
        let text = render(&node);
        let tree = parse_bracketed(&text).unwrap();
        let mut want = Vec::new();
        oracle_yngve(&node, 0, &mut want);
        assert_eq!(yngve_depths(&tree), want, "depths for {text}");
        assert_eq!(tree_height(&tree), oracle_height(&node), "height for {text}");
    }
}

// ---------------------------------------------------------------------------
// Criterion 6: learning numerics.
// ---------------------------------------------------------------------------

fn random_regression(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
) -> (DMatrix<f64>, Vec<f64>) {
    let x = DMatrix::from_fn(n, p, |_, _| normal(rng));
    let coef: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mut v = 0.5;
            for j in 0..p {
                v += coef[j] * x[(i, j)];
            }
            v + 0.3 * normal(rng)
        })
        .collect();
    (x, y)
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-((x - mean) * (x - mean)) / (2.0 * var)).exp()
        / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn acceptance_06_learning_numerics() {
    let mut rng = rng(406);

    // Least squares: residuals orthogonal to every column and to the
    // intercept, so the fit gradient vanishes.
    for round in 0..20 {
        let n = rng.random_range(20..=60usize);
        let p = rng.random_range(1..=6usize);
        let (x, y) = random_regression(&mut rng, n, p);
        let model = ols_fit(&x, &y, 0.0).unwrap();
        let fitted = model.predict(&x);
        let resid: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
        let total: f64 = resid.iter().sum();
        assert!(total.abs() < 1e-8, "round {round}: intercept gradient {total:e}");
        for j in 0..p {
            let g: f64 = (0..n).map(|i| x[(i, j)] * resid[i]).sum();
            assert!(g.abs() < 1e-8, "round {round}: column {j} gradient {g:e}");
        }
    }

    // The hat-matrix shortcut must agree with explicitly refit folds.
    for round in 0..20 {
        let n = rng.random_range(12..=40usize);
        let p = rng.random_range(1..=5usize);
        let (x, y) = random_regression(&mut rng, n, p);
        let shortcut = loocv_regress(&x, &y).unwrap();
        let explicit = loocv_regress_explicit(&x, &y, 0.0).unwrap();
        for i in 0..n {
            assert!(
                (shortcut[i] - explicit[i]).abs() < 1e-8,
                "round {round} fold {i}: {} vs {}",
                shortcut[i],
                explicit[i]
            );
        }
    }

    // Logistic regression: the penalized objective's gradient at the fitted
    // optimum, measured by central finite differences, is numerically zero.
    {
        let n = 80;
        let p = 3;
        let ridge = 1e-3;
        let x = DMatrix::from_fn(n, p, |_, _| normal(&mut rng));
        let labels: Vec<u8> = (0..n)
            .map(|i| {
                let eta = 0.8 * x[(i, 0)] - 0.5 * x[(i, 1)] + 0.3;
                let prob = 1.0 / (1.0 + (-eta).exp());
                u8::from(rng.random_range(0.0..1.0) < prob)
            })
            .collect();
        let model = logistic_fit(&x, &labels, ridge).unwrap();
        assert!(model.converged, "logistic fit did not converge");

        // Objective in the model's standardized coordinates; the intercept
        // is unpenalized.
        let objective = |weights: &[f64], intercept: f64| -> f64 {
            let mut acc = 0.0;
            for i in 0..n {
                let mut eta = intercept;
                for j in 0..p {
                    eta += weights[j] * (x[(i, j)] - model.means[j]) / model.scales[j];
                }
                let softplus = if eta > 0.0 {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                };
                acc += softplus - f64::from(labels[i]) * eta;
            }
            acc + 0.5 * ridge * weights.iter().map(|w| w * w).sum::<f64>()
        };
        let h = 1e-5;
        for j in 0..p {
            let mut plus = model.weights.clone();
            let mut minus = model.weights.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (objective(&plus, model.intercept) - objective(&minus, model.intercept))
                / (2.0 * h);
            assert!(fd.abs() < 1e-6, "weight {j}: finite-difference gradient {fd:e}");
        }
        let fd = (objective(&model.weights, model.intercept + h)
            - objective(&model.weights, model.intercept - h))
            / (2.0 * h);
        assert!(fd.abs() < 1e-6, "intercept: finite-difference gradient {fd:e}");
    }

    // Gaussian naive Bayes posterior against a direct density computation.
    for round in 0..50 {
        let n0 = rng.random_range(3..=10usize);
        let n1 = rng.random_range(3..=10usize);
        let p = rng.random_range(1..=3usize);
        let n = n0 + n1;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<u8> = Vec::new();
        for _ in 0..n0 {
            rows.push((0..p).map(|_| normal(&mut rng)).collect());
            labels.push(0);
        }
        for _ in 0..n1 {
            rows.push((0..p).map(|_| 1.5 + normal(&mut rng)).collect());
            labels.push(1);
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let model = nb_fit(&x, &labels).unwrap();

        // Class means and unbiased variances, computed from scratch.
        let mut means = [vec![0.0; p], vec![0.0; p]];
        let mut vars = [vec![0.0; p], vec![0.0; p]];
        let counts = [n0, n1];
        for class in 0..2 {
            for j in 0..p {
                let values: Vec<f64> = (0..n)
                    .filter(|&i| usize::from(labels[i]) == class)
                    .map(|i| rows[i][j])
                    .collect();
                let mean = values.iter().sum::<f64>() / counts[class] as f64;
                means[class][j] = mean;
                vars[class][j] = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (counts[class] - 1) as f64;
            }
        }
        let probe: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        let mut joint = [n0 as f64 / n as f64, n1 as f64 / n as f64];
        for class in 0..2 {
            for j in 0..p {
                joint[class] *= normal_pdf(probe[j], means[class][j], vars[class][j]);
            }
        }
        let want = joint[1] / (joint[0] + joint[1]);
        let got = model.predict_proba(&probe);
        assert!(
            (got - want).abs() < 1e-10,
            "round {round}: posterior {got} vs {want}"
        );
    }

    // Rank-based AUC equals trapezoidal ROC integration, ties included.
    for round in 0..1000 {
        let n = rng.random_range(2..=40usize);
        let labels: Vec<u8> = loop {
            let candidate: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
            if candidate.iter().any(|&l| l == 0) && candidate.iter().any(|&l| l == 1) {
                break candidate;
            }
        };
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<bool>() {
                    rng.random_range(0..=5) as f64 // heavy ties
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let (points, rank_auc) = roc_auc(&labels, &scores).unwrap();
        let trapezoid = trapezoid_auc(&points);
        assert!(
            (rank_auc - trapezoid).abs() <= 1e-12,
            "round {round}: {rank_auc} vs {trapezoid}"
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: stepwise selection recovers planted features.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_07_stepwise_planted_recovery() {
    let mut successes = 0;
    for seed in 0..100u64 {
        let mut rng = rng(700 + seed);
        let n = 109;
        let p = 73;
        let x = DMatrix::from_fn(n, p, |_, _| normal(&mut rng));
        let mut planted = BTreeSet::new();
        while planted.len() < 3 {
            planted.insert(rng.random_range(0..p));
        }
        let planted: Vec<usize> = planted.iter().copied().collect();
        let weights = [1.0, 0.8, 0.6];
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let mut v = 0.0;
                for (k, &j) in planted.iter().enumerate() {
                    v += weights[k] * x[(i, j)];
                }
                v + 0.1 * normal(&mut rng)
            })
            .collect();
        let ds = Dataset {
            x,
            feature_names: (0..p).map(|j| format!("f{j:02}")).collect(),
            subject_ids: (0..n).map(|i| format!("s{i:03}")).collect(),
        };
        let result = stepwise_select(&ds, &y, 5, DEFAULT_MIN_IMPROVEMENT).unwrap();

        // The error estimate never rises along the accepted path.
        let mut prev = result.baseline_rmse;
        for step in &result.steps {
            assert!(
                step.loocv_rmse <= prev,
                "seed {seed}: rmse rose {prev} -> {}",
                step.loocv_rmse
            );
            prev = step.loocv_rmse;
        }

        let want: BTreeSet<String> = planted.iter().map(|j| format!("f{j:02}")).collect();
        let got: BTreeSet<String> = result
            .steps
            .iter()
            .take(3)
            .map(|s| s.feature.clone())
            .collect();
        if result.steps.len() >= 3 && got == want {
            successes += 1;
        }
    }
    assert!(
        successes >= 95,
        "planted features ranked 1-3 in only {successes}/100 runs"
    );
}

// ---------------------------------------------------------------------------
// Shared end-to-end fixture, driven through the installed binary.
// ---------------------------------------------------------------------------

const BIN: &str = env!("CARGO_BIN_EXE_langpanel");

fn argv(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

fn run(args: &[String]) {
    let out = Command::new(BIN).args(args).output().expect("run pipeline binary");
    assert!(
        out.status.success(),
        "langpanel {:?} exited with {:?}\nstderr:\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn extract_args(corpus: &Path, out: &Path) -> Vec<String> {
    argv(&[
        "extract",
        "--corpus",
        corpus.join("transcripts").to_str().unwrap(),
        "--embeddings",
        corpus.join("embeddings.txt").to_str().unwrap(),
        "--freq",
        corpus.join("frequencies.txt").to_str().unwrap(),
        "--trees",
        corpus.join("trees").to_str().unwrap(),
        "--ext-vectors",
        corpus.join("ext_vectors.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn confusion_total(report: &serde_json::Value) -> u64 {
    let c = &report["confusion"];
    ["true_positive", "false_positive", "false_negative", "true_negative"]
        .iter()
        .map(|k| c[*k].as_u64().unwrap())
        .sum()
}

struct Fixture {
    _dir: tempfile::TempDir,
    corpus_dir: PathBuf,
    table: PathBuf,
    selection: PathBuf,
    null_table: PathBuf,
    null_selection: PathBuf,
    build_elapsed: Duration,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(build_fixture)
}

fn build_fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let corpus_dir = root.join("two_group");
    let table = root.join("two_group.csv");
    let selection = root.join("two_group_selection.json");
    let null_corpus = root.join("uniform");
    let null_raw = root.join("uniform_raw.csv");
    let null_table = root.join("uniform_relabel.csv");
    let null_selection = root.join("uniform_selection.json");

    let started = Instant::now();

    // Arm 1: two well-separated group profiles, 30 subjects each.
    run(&argv(&[
        "synth",
        "--n",
        "30",
        "--seed",
        "7",
        "--out",
        corpus_dir.to_str().unwrap(),
    ]));
    run(&extract_args(&corpus_dir, &table));
    run(&argv(&[
        "select",
        "--features",
        table.to_str().unwrap(),
        "--max-features",
        "25",
        "--out",
        selection.to_str().unwrap(),
    ]));

    // Arm 2: a single profile; the group column becomes an arbitrary half
    // split, so any classification signal would be spurious.
    let profile = GroupProfile {
        group: Group::Control,
        topic_drift: 0.5,
        vocab_concentration: 0.8,
        turn_len_mean: 15.0,
        turn_len_var: 9.0,
        function_word_rate: 0.37,
        sentence_len_mean: 8.0,
        score_weights: ScoreWeights {
            intercept: 4.8,
            drift: -2.0,
            concentration: -0.8,
            noise_sigma: 0.15,
        },
    };
    let profile_path = root.join("uniform_profile.json");
    save_profiles(&[profile], &profile_path).unwrap();
    run(&argv(&[
        "synth",
        "--profile",
        profile_path.to_str().unwrap(),
        "--n",
        "200",
        "--seed",
        "23",
        "--out",
        null_corpus.to_str().unwrap(),
    ]));
    run(&extract_args(&null_corpus, &null_raw));
    let mut panels = read_table(&null_raw).unwrap();
    let mut ids: Vec<String> = panels.iter().map(|p| p.subject_id.clone()).collect();
    ids.sort();
    let first_half: BTreeSet<&str> = ids[..ids.len() / 2].iter().map(|s| s.as_str()).collect();
    for panel in &mut panels {
        panel.group = Some(if first_half.contains(panel.subject_id.as_str()) {
            Group::Control
        } else {
            Group::SzSza
        });
    }
    write_table(&panels, &null_table).unwrap();
    run(&argv(&[
        "select",
        "--features",
        null_table.to_str().unwrap(),
        "--max-features",
        "25",
        "--out",
        null_selection.to_str().unwrap(),
    ]));

    Fixture {
        _dir: dir,
        corpus_dir,
        table,
        selection,
        null_table,
        null_selection,
        build_elapsed: started.elapsed(),
    }
}

// ---------------------------------------------------------------------------
// Criterion 8: end-to-end separation plus a no-spurious-signal guard.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_end_to_end_auc_and_null_guard() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();

    // Well-separated groups: both classifier families must discriminate.
    for model in ["lr", "nb"] {
        let out = dir.path().join(format!("separated_{model}.json"));
        run(&argv(&[
            "classify",
            "--features",
            f.table.to_str().unwrap(),
            "--selection",
            f.selection.to_str().unwrap(),
            "--task",
            "clinical-vs-control",
            "--model",
            model,
            "--out",
            out.to_str().unwrap(),
        ]));
        let report = read_json(&out);
        let auc = report["auc"].as_f64().unwrap();
        assert!(auc >= 0.90, "{model}: separated-group AUC {auc} < 0.90");
        assert_eq!(confusion_total(&report), 60, "{model}: confusion total");
    }

    // Sham groups: AUC must stay in the chance band.
    for model in ["lr", "nb"] {
        let out = dir.path().join(format!("null_{model}.json"));
        run(&argv(&[
            "classify",
            "--features",
            f.null_table.to_str().unwrap(),
            "--selection",
            f.null_selection.to_str().unwrap(),
            "--task",
            "clinical-vs-control",
            "--model",
            model,
            "--out",
            out.to_str().unwrap(),
        ]));
        let auc = read_json(&out)["auc"].as_f64().unwrap();
        assert!(
            (0.35..=0.65).contains(&auc),
            "{model}: sham-group AUC {auc} outside [0.35, 0.65]"
        );
    }

    let elapsed = f.build_elapsed + started.elapsed();
    assert!(
        elapsed < Duration::from_secs(60),
        "end-to-end pipeline took {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: protocol fidelity — top-k ranks, confusion totals, and
// bitwise-reproducible reports.
// ---------------------------------------------------------------------------

/// A table whose target mixes thirty planted features with geometrically
/// decaying weights, so a forward search sustains a full 25-step ranking.
fn write_ranking_table(path: &Path) -> usize {
    let names = canonical_feature_names(&ExtractConfig::default());
    assert_eq!(names.len(), 73);
    let mut rng = rng(409);
    let n = 80;
    let mut order: Vec<usize> = (0..names.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let planted = &order[..30];
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..names.len()).map(|_| normal(&mut rng)).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|row| {
            let mut v = 0.0;
            for (k, &j) in planted.iter().enumerate() {
                v += 1.5 * 0.92f64.powi(k as i32) * row[j];
            }
            v + 0.02 * normal(&mut rng)
        })
        .collect();
    let mut sorted = y.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[n / 2];
    let panels: Vec<FeaturePanel> = (0..n)
        .map(|i| FeaturePanel {
            subject_id: format!("subj_{i:03}"),
            group: Some(if y[i] >= median { Group::SzSza } else { Group::Control }),
            sspa_overall: Some(y[i]),
            features: names.iter().cloned().zip(rows[i].iter().copied()).collect(),
        })
        .collect();
    write_table(&panels, path).unwrap();
    n
}

#[test]
fn acceptance_09_protocol_fidelity_and_reproducibility() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let table = root.join("ranking.csv");
    let n = write_ranking_table(&table);
    let selection = root.join("selection.json");
    let select_cmd = argv(&[
        "select",
        "--features",
        table.to_str().unwrap(),
        "--max-features",
        "25",
        "--out",
        selection.to_str().unwrap(),
    ]);
    run(&select_cmd);
    let report = read_json(&selection);
    let steps = report["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 25, "search must sustain a full 25-step ranking");
    for (i, step) in steps.iter().enumerate() {
        assert_eq!(
            step["rank"].as_u64(),
            Some(i as u64 + 1),
            "insertion ranks are 1-based and consecutive"
        );
    }
    let first15: Vec<String> = steps[..15]
        .iter()
        .map(|s| s["feature"].as_str().unwrap().to_string())
        .collect();

    // --top 15 must use exactly insertion ranks 1 through 15.
    let top_out = root.join("top15.json");
    run(&argv(&[
        "classify",
        "--features",
        table.to_str().unwrap(),
        "--selection",
        selection.to_str().unwrap(),
        "--top",
        "15",
        "--task",
        "clinical-vs-control",
        "--model",
        "lr",
        "--out",
        top_out.to_str().unwrap(),
    ]));
    let top_report = read_json(&top_out);
    let used: Vec<String> = top_report["features_used"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(used, first15, "--top 15 feature subset");

    // Confusion matrices partition the cohort for both model families.
    for model in ["lr", "nb"] {
        let out = root.join(format!("full_{model}.json"));
        run(&argv(&[
            "classify",
            "--features",
            table.to_str().unwrap(),
            "--selection",
            selection.to_str().unwrap(),
            "--task",
            "clinical-vs-control",
            "--model",
            model,
            "--out",
            out.to_str().unwrap(),
        ]));
        let report = read_json(&out);
        assert_eq!(confusion_total(&report), n as u64, "{model}: confusion total");
        assert_eq!(
            report["per_subject"].as_array().unwrap().len(),
            n,
            "{model}: per-subject rows"
        );
    }

    // Identical invocations yield byte-identical artifacts: the feature
    // table, the selection report, and both model reports.
    let repro_table = root.join("repro.csv");
    let extract_cmd = extract_args(&f.corpus_dir, &repro_table);
    run(&extract_cmd);
    let table_first = std::fs::read(&repro_table).unwrap();
    run(&extract_cmd);
    assert_eq!(
        table_first,
        std::fs::read(&repro_table).unwrap(),
        "extract output must be byte-identical across runs"
    );

    let selection_first = std::fs::read(&selection).unwrap();
    run(&select_cmd);
    assert_eq!(
        selection_first,
        std::fs::read(&selection).unwrap(),
        "selection report must be byte-identical across runs"
    );

    let regress_out = root.join("regress.json");
    let regress_cmd = argv(&[
        "regress",
        "--features",
        table.to_str().unwrap(),
        "--selection",
        selection.to_str().unwrap(),
        "--out",
        regress_out.to_str().unwrap(),
    ]);
    run(&regress_cmd);
    let regress_first = std::fs::read(&regress_out).unwrap();
    run(&regress_cmd);
    assert_eq!(
        regress_first,
        std::fs::read(&regress_out).unwrap(),
        "regression report must be byte-identical across runs"
    );

    for model in ["lr", "nb"] {
        let out = root.join(format!("repeat_{model}.json"));
        let cmd = argv(&[
            "classify",
            "--features",
            table.to_str().unwrap(),
            "--selection",
            selection.to_str().unwrap(),
            "--task",
            "clinical-vs-control",
            "--model",
            model,
            "--out",
            out.to_str().unwrap(),
        ]);
        run(&cmd);
        let first = std::fs::read(&out).unwrap();
        run(&cmd);
        assert_eq!(
            first,
            std::fs::read(&out).unwrap(),
            "{model}: classification report must be byte-identical across runs"
        );
    }
}
