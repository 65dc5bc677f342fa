use std::sync::Arc;

use ndarray::{array, Array2};
use plumenet::autodiff::{Bindings, Graph};
use plumenet::network::*;

fn graph_forward(model: &Model, points: &Array2<f64>) -> Array2<f64> {
    let mut g = Graph::new();
    let net = NetworkParams::declare(&mut g, &model.arch);
    let vars: Vec<_> = (0..model.arch.inputs()).map(|i| g.input(&format!("in{i}"), 1).unwrap()).collect();
    let out = net.forward(&mut g, &model.arch, &model.scaling, &vars).unwrap();
    let mut b = Bindings::new();
    net.bind(&mut b, &model.shared_params());
    for (i, v) in vars.iter().enumerate() {
        b.bind_column(v.id, &points.column(i).to_vec());
    }
    g.eval(out, &b).unwrap()
}

#[test]
fn xavier_is_deterministic_with_zero_biases() {
    let arch = Architecture::mlp(4, 300, 10, 6);
    let a = xavier_init(&arch, 42);
    assert_eq!(a, xavier_init(&arch, 42));
    assert_ne!(a, xavier_init(&arch, 43));
    for l in 0..arch.layers() {
        assert!(a.bias(l).iter().all(|&b| b == 0.0));
    }
    let w = a.weight(0);
    assert_eq!(w.dim(), (4, 300));
    let n = w.len() as f64;
    let mean = w.sum() / n;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let target = 2.0 / (4.0 + 300.0);
    assert!((var / target - 1.0).abs() < 0.1, "{var} vs {target}");
    let bound = (6.0f64 / 304.0).sqrt();
    assert!(w.iter().all(|x| x.abs() <= bound));
}

#[test]
fn zero_weights_collapse_to_bias_image() {
    let arch = Architecture::mlp(3, 4, 1, 2);
    let mut m = Model::new(arch, InputScaling::identity(3), 1).unwrap();
    m.params.arrays[0].fill(0.0);
    m.params.arrays[1] = array![[0.1, -0.2, 0.3, 0.5]];
    m.params.arrays[3] = array![[1.0, -1.0]];
    let w2 = m.params.arrays[2].clone();
    let expected = m.params.arrays[1].mapv(f64::tanh).dot(&w2) + &m.params.arrays[3];
    let out = m.predict(&array![[0.3, -0.7, 0.9], [0.0, 0.0, 0.0]]);
    for r in 0..2 {
        for c in 0..2 {
            assert!((out[[r, c]] - expected[[0, c]]).abs() < 1e-15);
        }
    }
}

#[test]
fn identity_activation_is_the_composed_affine_map() {
    let arch = Architecture { sizes: vec![3, 4, 2], activation: Activation::Identity };
    let scaling = InputScaling { ranges: vec![(0.0, 2.0), (-1.0, 1.0), (0.0, 4.0)] };
    let m = Model::new(arch, scaling.clone(), 9).unwrap();
    let x = array![[1.5, 0.25, 3.0]];
    // Hand composition: scale each input, then two affine layers.
    let s: Vec<f64> = (0..3)
        .map(|i| {
            let (lo, hi) = scaling.ranges[i];
            2.0 * (x[[0, i]] - lo) / (hi - lo) - 1.0
        })
        .collect();
    let s = Array2::from_shape_vec((1, 3), s).unwrap();
    let h = s.dot(m.params.weight(0)) + m.params.bias(0);
    let expected = h.dot(m.params.weight(1)) + m.params.bias(1);
    let got = m.predict(&x);
    let via_graph = graph_forward(&m, &x);
    for c in 0..2 {
        assert!((got[[0, c]] - expected[[0, c]]).abs() < 1e-14);
        assert!((via_graph[[0, c]] - expected[[0, c]]).abs() < 1e-14);
    }
}

#[test]
fn save_load_forward_is_bit_identical() {
    let arch = Architecture::mlp(4, 16, 3, 6);
    let scaling = InputScaling { ranges: vec![(0.5, 0.7), (0.5, 0.7), (0.05, 0.5), (0.0, 10.0)] };
    let m = Model::new(arch, scaling, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    m.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, m);
    let pts = Array2::from_shape_fn((7, 4), |(i, j)| 0.1 * (i + j) as f64);
    let (a, b) = (m.predict(&pts), back.predict(&pts));
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    let g = graph_forward(&m, &pts);
    assert!(a.iter().zip(&g).all(|(x, y)| (x - y).abs() < 1e-13));
    assert!(a.iter().all(|x| x.is_finite()));
}

#[test]
fn model_file_errors() {
    let m = Model::new(Architecture::mlp(3, 5, 2, 5), InputScaling::identity(3), 0).unwrap();
    let mut bytes = Vec::new();
    m.write_to(&mut bytes).unwrap();
    let mut bad = bytes.clone();
    bad[1] ^= 0xff;
    assert!(matches!(Model::read_from(&mut bad.as_slice()), Err(NetworkError::BadMagic)));
    let mut bad = bytes.clone();
    bad[8] = 7;
    assert!(matches!(Model::read_from(&mut bad.as_slice()), Err(NetworkError::Version(7))));
    let cut = &bytes[..bytes.len() - 1];
    assert!(matches!(Model::read_from(&mut &cut[..]), Err(NetworkError::Truncated(_))));
}

#[test]
fn invalid_architectures_are_rejected() {
    let no_hidden = Architecture { sizes: vec![3, 5], activation: Activation::Tanh };
    assert!(no_hidden.validate().is_err());
    let zero = Architecture { sizes: vec![3, 0, 5], activation: Activation::Tanh };
    assert!(zero.validate().is_err());
    let m = Model::new(Architecture::mlp(3, 4, 1, 5), InputScaling::identity(3), 0).unwrap();
    let mut p = m.params.clone();
    p.arrays[0] = Array2::zeros((2, 4));
    assert!(p.check(&m.arch).is_err());
    let _ = Arc::new(p);
}
