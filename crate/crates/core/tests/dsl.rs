use nalgebra::DMatrix;
use propgen_core::autodiff::Tensor;
use propgen_core::dsl::{
    builtin, check_shapes, compile, parse, parse_and_check, print, CompiledMechanism, Dims, DslError, BUILTIN_NAMES,
};
use propgen_core::graph::{gen_synthetic, prune_mean_std, Graph, SyntheticSpec, DEFAULT_PRUNE_EPSILON};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(n: usize, f: usize, c: usize, seed: u64) -> Graph {
    gen_synthetic(&SyntheticSpec {
        n,
        classes: c,
        homophily: 0.6,
        avg_degree: 4.0,
        feature_dim: f,
        signal: 1.0,
        seed,
    })
    .unwrap()
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Tensor<f64> {
    let v: Vec<f64> = (0..shape.0 * shape.1).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &v)
}

fn to_mat(t: &Tensor<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn param(m: &CompiledMechanism<f64>, name: &str) -> DMatrix<f64> {
    to_mat(m.compute_graph().param_value(name).unwrap())
}

fn adjacency(g: &Graph, self_loop: f64) -> DMatrix<f64> {
    let n = g.num_nodes();
    let mut a = DMatrix::<f64>::identity(n, n) * self_loop;
    for &(u, v) in g.edges() {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    a
}

/// `D^-1/2 (A + cI) D^-1/2` with zero rows for isolated nodes.
fn sym_norm(g: &Graph, self_loop: f64) -> DMatrix<f64> {
    let a = adjacency(g, self_loop);
    let d: Vec<f64> = a.row_iter().map(|r| r.sum()).collect();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        if d[i] == 0.0 || d[j] == 0.0 {
            0.0
        } else {
            a[(i, j)] / (d[i] * d[j]).sqrt()
        }
    })
}

fn path3() -> Graph {
    Graph::new("p3", 3, 2, 2, [(0, 1), (1, 2)], vec![0.0; 6], vec![0, 1, 0]).unwrap()
}

#[test]
fn corpus_parses_checks_compiles_and_runs() {
    let dims = Dims { n: 50, f: 10, h: 16, c: 3 };
    let graph = random_graph(50, 10, 3, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in BUILTIN_NAMES {
        let tp = parse_and_check(builtin(name).unwrap(), dims).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut m = compile::<f64>(&tp, &graph, 5).unwrap_or_else(|e| panic!("{name}: {e}"));
        let x = random_tensor(&mut rng, (50, 16));
        let xr = random_tensor(&mut rng, (50, 16));
        let y = m.forward(&x, &xr).unwrap();
        assert_eq!(y.shape(), tp.output, "{name}");
        assert!(y.all_finite(), "{name}");
    }
}

#[test]
fn print_parse_print_fixpoint() {
    for name in BUILTIN_NAMES {
        let once = print(&parse(builtin(name).unwrap()).unwrap());
        let twice = print(&parse(&once).unwrap());
        assert_eq!(once, twice, "{name}");
    }
}

#[test]
fn cora_block_structure() {
    let prog = parse(builtin("cora-appnp-residual").unwrap()).unwrap();
    assert_eq!(prog.final_block.len(), 1);
    assert!(prog.step.is_some());
    // K - 1 accumulation steps plus the final block: K = 4 propagations
    let dims = Dims { n: 3, f: 2, h: 2, c: 2 };
    let m = compile::<f64>(&check_shapes(&prog, dims).unwrap(), &path3(), 0).unwrap();
    let spmm = m.compute_graph().topology().iter().filter(|(op, _)| *op == "spmm").count();
    assert_eq!(spmm, 4);
}

#[test]
fn cora_with_alpha_one_is_identity() {
    let graph = random_graph(40, 6, 3, 2);
    let dims = Dims { n: 40, f: 6, h: 8, c: 3 };
    let tp = parse_and_check(builtin("cora-appnp-residual").unwrap(), dims).unwrap();
    let mut m = compile::<f64>(&tp, &graph, 9).unwrap();
    m.set_param("alpha", Tensor::scalar(1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, (40, 8));
    let xr = random_tensor(&mut rng, (40, 8));
    let y = m.forward(&x, &xr).unwrap();
    assert_eq!(y.max_abs_diff(&x), 0.0);
}

#[test]
fn gcn_identity_weight_on_path() {
    let graph = path3();
    let tp = parse_and_check(builtin("gcn").unwrap(), Dims { n: 3, f: 2, h: 2, c: 2 }).unwrap();
    let mut m = compile::<f64>(&tp, &graph, 0).unwrap();
    m.set_param("W[1]", Tensor::identity(2)).unwrap();
    let x = Tensor::from_f64((3, 2), &[1.0, 0.0, 0.0, 1.0, 2.0, -1.0]);
    let y = m.forward(&x, &x).unwrap();
    // degrees with self loops are 2, 3, 2
    let s6 = 1.0 / 6f64.sqrt();
    let ahat = [[0.5, s6, 0.0], [s6, 1.0 / 3.0, s6], [0.0, s6, 0.5]];
    for i in 0..3 {
        for j in 0..2 {
            let expected: f64 = (0..3).map(|k| ahat[i][k] * x.at(k, j)).sum();
            assert!((y.at(i, j) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn pruned_norm_matches_graph_core() {
    let graph = random_graph(12, 3, 2, 4);
    let text = "mechanism probe { consts { K = 1; } graph { B = pruned_norm(c = 2); } out { Y = spmm(B, X); } }";
    let tp = parse_and_check(text, Dims { n: 12, f: 3, h: 12, c: 2 }).unwrap();
    let mut m = compile::<f64>(&tp, &graph, 0).unwrap();
    let eye = Tensor::identity(12);
    let y = m.forward(&eye, &eye).unwrap();
    let expected = prune_mean_std(&graph, 2.0, DEFAULT_PRUNE_EPSILON).unwrap().to_dense();
    assert_eq!(y.data(), expected.as_slice());
}

/// Independent mean/std pruning over the nonzero entries of `A + 2I`.
fn pruned_oracle(g: &Graph) -> DMatrix<f64> {
    let a = adjacency(g, 2.0);
    let nz: Vec<f64> = a.iter().copied().filter(|&v| v != 0.0).collect();
    let mu = nz.iter().sum::<f64>() / nz.len() as f64;
    let sigma = (nz.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / nz.len() as f64).sqrt();
    let total: f64 = nz.iter().sum();
    a.map(|v| if v != 0.0 && v >= mu - sigma { v / (total + 1e-10) } else { 0.0 })
}

#[test]
fn pubmed_matches_dense_oracle() {
    let graph = random_graph(30, 4, 3, 8);
    let tp = parse_and_check(builtin("pubmed-pruned-residual").unwrap(), Dims { n: 30, f: 4, h: 5, c: 3 }).unwrap();
    let mut m = compile::<f64>(&tp, &graph, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, xr) = (random_tensor(&mut rng, (30, 5)), random_tensor(&mut rng, (30, 5)));
    let y = to_mat(&m.forward(&x, &xr).unwrap());

    let scalar = |name: &str| param(&m, name)[(0, 0)];
    let abar = pruned_oracle(&graph);
    let mut z = to_mat(&x) * scalar("alpha") + to_mat(&xr) * scalar("gamma");
    for k in 1..=4 {
        let step = (&abar * &z * param(&m, &format!("W[{k}]"))).map(|v| v.max(0.0));
        z += step * scalar("beta");
    }
    assert!((y - z).abs().max() < 1e-12);
}

#[test]
fn texas_matches_dense_oracle() {
    let graph = random_graph(25, 4, 3, 5);
    let tp = parse_and_check(builtin("texas-powersum-att").unwrap(), Dims { n: 25, f: 4, h: 6, c: 3 }).unwrap();
    assert_eq!(tp.output, (25, 3));
    let mut m = compile::<f64>(&tp, &graph, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let att = random_tensor(&mut rng, (25, 1));
    m.set_param("Att", att.clone()).unwrap();
    let (x, xr) = (random_tensor(&mut rng, (25, 6)), random_tensor(&mut rng, (25, 6)));
    let y = to_mat(&m.forward(&x, &xr).unwrap());

    let at = sym_norm(&graph, 0.0);
    let x = to_mat(&x);
    let mut power = x.clone();
    let mut sum = DMatrix::zeros(25, 6);
    for _ in 1..=4 {
        power = &at * power;
        sum += &power;
    }
    let mut inner = to_mat(&xr) * param(&m, "W1") + sum;
    for i in 0..25 {
        inner.row_mut(i).scale_mut(att.at(i, 0));
    }
    let activated = inner.map(|v| if v > 0.0 { v } else { v.exp_m1() });
    let expected = activated * param(&m, "W2");
    assert!((y - expected).abs().max() < 1e-12);
}

#[test]
fn computer_normalizes_by_absolute_powers() {
    let graph = random_graph(20, 3, 2, 1);
    let tp = parse_and_check(builtin("computer-gpr2").unwrap(), Dims { n: 20, f: 3, h: 4, c: 2 }).unwrap();
    let mut m = compile::<f64>(&tp, &graph, 4).unwrap();
    m.set_param("alpha", Tensor::scalar(-0.5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(&mut rng, (20, 4));
    let y = to_mat(&m.forward(&x, &x).unwrap());

    let ahat = sym_norm(&graph, 2.0);
    let x = to_mat(&x);
    let a = -0.5f64;
    let norm = 1.0 + a.abs() + (a * a).abs();
    let ax = &ahat * &x;
    let expected = (&x + &ax * param(&m, "W[1]") * a + &ahat * &ax * param(&m, "W[2]") * (a * a)) / norm;
    assert!((y - expected).abs().max() < 1e-12);
}

fn node_count(name: &str, k: usize) -> usize {
    let mut prog = parse(builtin(name).unwrap()).unwrap();
    prog.set_const("K", k as f64).unwrap();
    let graph = random_graph(10, 3, 2, 0);
    let tp = check_shapes(&prog, Dims { n: 10, f: 3, h: 4, c: 2 }).unwrap();
    compile::<f64>(&tp, &graph, 0).unwrap().compute_graph().num_nodes()
}

#[test]
fn node_count_linear_in_k() {
    for name in ["gcn", "appnp", "gpr", "fagcn-lite", "cora-appnp-residual", "texas-powersum-att"] {
        let counts: Vec<usize> = [1, 2, 4, 8].iter().map(|&k| node_count(name, k)).collect();
        let a = counts[1] - counts[0];
        let b = counts[0] - a;
        for (k, c) in [1, 2, 4, 8].iter().zip(&counts) {
            assert_eq!(*c, a * k + b, "{name}: {counts:?}");
        }
    }
}

#[test]
fn compile_is_deterministic() {
    let graph = random_graph(30, 5, 3, 9);
    let tp = parse_and_check(builtin("squirrel-att-stack").unwrap(), Dims { n: 30, f: 5, h: 8, c: 3 }).unwrap();
    let a = compile::<f32>(&tp, &graph, 77).unwrap();
    let b = compile::<f32>(&tp, &graph, 77).unwrap();
    assert_eq!(a.compute_graph().topology(), b.compute_graph().topology());
    for (p, q) in a.compute_graph().params().iter().zip(b.compute_graph().params()) {
        assert_eq!(p.name, q.name);
        assert_eq!(p.value, q.value);
    }
    let c = compile::<f32>(&tp, &graph, 78).unwrap();
    assert_ne!(a.compute_graph().params()[1].value, c.compute_graph().params()[1].value);
}

#[test]
fn high_pass_override() {
    let mut prog = parse(builtin("fagcn-lite").unwrap()).unwrap();
    prog.set_const("sign", -1.0).unwrap();
    let tp = check_shapes(&prog, Dims { n: 3, f: 2, h: 2, c: 2 }).unwrap();
    let m = compile::<f64>(&tp, &path3(), 0).unwrap();
    assert_eq!(m.compute_graph().param_value("g[1]").unwrap().at(0, 0), -1.0);
    assert!(print(&prog).contains("sign = -1;"));
    assert!(matches!(prog.set_const("nosuch", 1.0), Err(DslError::UndeclaredIdentifier { .. })));
}

#[test]
fn wrong_node_count_is_a_compile_error() {
    let tp = parse_and_check(builtin("gcn").unwrap(), Dims { n: 4, f: 2, h: 2, c: 2 }).unwrap();
    assert!(matches!(compile::<f64>(&tp, &path3(), 0), Err(DslError::Compile(_))));
}
