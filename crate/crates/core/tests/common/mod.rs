//! Generators and brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use buglocate::codeast::AstNode;
use rand::Rng;

/// Random tree with exactly `leaves` leaves and interior kinds drawn from a
/// small alphabet, so equal kinds at different positions are common.
pub fn random_ast<R: Rng>(rng: &mut R, leaves: usize) -> AstNode {
    assert!(leaves >= 1);
    if leaves == 1 && rng.gen_bool(0.3) {
        return AstNode::leaf("Name", format!("t{}", rng.gen_range(0..5)));
    }
    let kinds = ["Block", "Assign", "Call", "Plus", "If", "Return"];
    let kind = kinds[rng.gen_range(0..kinds.len())];
    // split the leaf budget among 1..=3 children
    let arity = rng.gen_range(1..=3.min(leaves.max(1)));
    let mut budget = vec![1; arity];
    for _ in arity..leaves {
        let k = rng.gen_range(0..arity);
        budget[k] += 1;
    }
    let children = budget
        .into_iter()
        .map(|b| {
            if b == 1 && rng.gen_bool(0.6) {
                AstNode::leaf("Name", format!("t{}", rng.gen_range(0..5)))
            } else {
                random_ast(rng, b)
            }
        })
        .collect();
    AstNode::interior(kind, children)
}

/// Leaf-pair enumeration via parent pointers: returns (i, j, interior nodes
/// on the path) for every leaf pair i < j.
pub fn brute_force_pairs(ast: &AstNode) -> Vec<(usize, usize, usize)> {
    // flatten into (parent, is_leaf)
    let mut parent: Vec<Option<usize>> = Vec::new();
    let mut is_leaf = Vec::new();
    fn walk(n: &AstNode, p: Option<usize>, parent: &mut Vec<Option<usize>>, is_leaf: &mut Vec<bool>) {
        let id = parent.len();
        parent.push(p);
        is_leaf.push(n.children.is_empty());
        for c in &n.children {
            walk(c, Some(id), parent, is_leaf);
        }
    }
    walk(ast, None, &mut parent, &mut is_leaf);
    let leaves: Vec<usize> = (0..parent.len()).filter(|&i| is_leaf[i]).collect();
    let chain = |mut n: usize| {
        let mut v = vec![];
        while let Some(p) = parent[n] {
            v.push(p);
            n = p;
        }
        v
    };
    let mut out = vec![];
    for a in 0..leaves.len() {
        for b in a + 1..leaves.len() {
            let ca = chain(leaves[a]);
            let cb = chain(leaves[b]);
            let lca = *ca.iter().find(|x| cb.contains(x)).unwrap();
            let up = ca.iter().position(|&x| x == lca).unwrap();
            let down = cb.iter().position(|&x| x == lca).unwrap();
            out.push((a, b, up + down + 1));
        }
    }
    out
}

/// Files of a generated dataset: a manifest plus report and method vector
/// tables keyed by bug id and `ast_ref`.
pub struct SyntheticFiles {
    pub manifest: std::path::PathBuf,
    pub reports: std::path::PathBuf,
    pub methods: std::path::PathBuf,
}

/// Writes a dataset of `bugs` bugs with `methods` candidates each, one of
/// them buggy. Report and method vectors are standard normal noise; buggy
/// methods are shifted by `shift` along a fixed random unit direction, so
/// relevance is a noisy linear function of the method vector. Each bug's
/// fix touches its buggy method's middle line.
pub fn write_synthetic(
    dir: &std::path::Path,
    bugs: usize,
    methods: usize,
    report_dim: usize,
    method_dim: usize,
    shift: f64,
    seed: u64,
) -> SyntheticFiles {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use serde_json::{json, Map, Value};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut direction = gauss(method_dim);
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|x| *x /= norm);

    let mut bug_rows = Vec::new();
    let mut method_map = Map::new();
    let mut hunk_map = Map::new();
    let mut report_vecs = Map::new();
    let mut method_vecs = Map::new();
    for b in 0..bugs {
        let bug_id = format!("BUG-{b:03}");
        bug_rows.push(json!({
            "bug_id": bug_id,
            "title": format!("synthetic failure {b}"),
            "description": "generated",
            "report_time_epoch": 1_000 + 10 * b as i64,
        }));
        report_vecs.insert(bug_id.clone(), json!(gauss(report_dim)));
        let buggy = (gauss(1)[0].abs() * 1e6) as usize % methods;
        let mut rows = Vec::new();
        for m in 0..methods {
            let ast_ref = format!("{bug_id}/m{m}");
            let mut v = gauss(method_dim);
            if m == buggy {
                v.iter_mut().zip(&direction).for_each(|(x, d)| *x += shift * d);
            }
            method_vecs.insert(ast_ref.clone(), json!(v));
            rows.push(json!({
                "method_id": format!("C.m{m}"),
                "file": "src/C.java",
                "name": format!("m{m}"),
                "start_line": 10 * m + 1,
                "end_line": 10 * m + 9,
                "ast_ref": ast_ref,
            }));
        }
        method_map.insert(bug_id.clone(), Value::Array(rows));
        hunk_map.insert(
            bug_id,
            json!([{ "file": "src/C.java", "changed_lines": [10 * buggy + 5] }]),
        );
    }
    let manifest = json!({ "bugs": bug_rows, "methods": method_map, "hunks": hunk_map });
    let files = SyntheticFiles {
        manifest: dir.join("manifest.json"),
        reports: dir.join("reports.json"),
        methods: dir.join("methods.json"),
    };
    std::fs::write(&files.manifest, manifest.to_string()).unwrap();
    std::fs::write(&files.reports, Value::Object(report_vecs).to_string()).unwrap();
    std::fs::write(&files.methods, Value::Object(method_vecs).to_string()).unwrap();
    files
}

fn gradient_instance(report: Vec<f64>, method: Vec<f64>, label: bool) -> buglocate::imbalance::Instance {
    buglocate::imbalance::Instance {
        report_vec: std::sync::Arc::from(report),
        method_vec: std::sync::Arc::from(method),
        label,
        bug_id: "b".into(),
        method_id: "m".into(),
        report_time: 0,
    }
}

/// Smallest |pre-activation| of any ReLU unit; central differences are
/// unreliable when a step crosses the kink.
pub fn min_relu_margin(net: &buglocate::neural::Network, x: &buglocate::imbalance::Instance) -> f64 {
    use buglocate::neural::Activation;
    let mut margin = f64::INFINITY;
    for (tower, input) in [(&net.report_tower, &x.report_vec), (&net.method_tower, &x.method_vec)] {
        let mut a = ndarray::Array1::from(input.to_vec());
        for layer in tower.iter() {
            let z = layer.weights.dot(&a) + &layer.biases;
            if layer.activation == Activation::Relu {
                margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
                a = z.mapv(|v| v.max(0.0));
            } else {
                a = z.mapv(f64::tanh);
            }
        }
    }
    margin
}

/// Central-difference check (h = 1e-5) of every parameter of `trials`
/// small random networks, alternating tanh/ReLU and cycling the three
/// losses. Returns the worst relative error; entries where both gradients
/// are below 1e-10 in absolute difference are skipped.
pub fn worst_gradient_error(trials: u64, seed: u64) -> f64 {
    use buglocate::neural::{Activation, LossSpec, Network, TowerConfig};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let activation = if trial % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Relu
        };
        let rdims = vec![rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..4)];
        let mdims = vec![rng.gen_range(1..5), rng.gen_range(1..4)];
        let mut net = Network::new(
            &TowerConfig::new(rdims.clone(), activation).unwrap(),
            &TowerConfig::new(mdims.clone(), activation).unwrap(),
            trial,
        )
        .unwrap();
        for s in net.slices_mut() {
            for v in s.iter_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let spec = match trial % 3 {
            0 => LossSpec::bce(),
            1 => LossSpec::wbce(0.7, 2.5),
            _ => LossSpec::focal(0.25, 2.0),
        };
        let mut vec = |n: usize| (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<f64>>();
        let x = loop {
            let (r, m) = (vec(rdims[0]), vec(mdims[0]));
            let x = gradient_instance(r, m, trial % 4 < 2);
            if min_relu_margin(&net, &x) > 1e-3 {
                break x;
            }
        };
        let (_, grads) = net.gradient(&[&x], &spec).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        for (s, row) in analytic.iter().enumerate() {
            for (i, &a) in row.iter().enumerate() {
                let orig = net.slices_mut()[s][i];
                net.slices_mut()[s][i] = orig + h;
                let up = net.gradient(&[&x], &spec).unwrap().0;
                net.slices_mut()[s][i] = orig - h;
                let down = net.gradient(&[&x], &spec).unwrap().0;
                net.slices_mut()[s][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let err = (a - numeric).abs();
                if err > 1e-10 {
                    worst = worst.max(err / a.abs().max(numeric.abs()).max(1e-7));
                }
            }
        }
    }
    worst
}
