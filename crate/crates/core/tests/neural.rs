use pathwise_core::neural::{
    grad_check, train, Checkpoint, DenseExample, DenseNet, Loss, Network, NeuralError, Optimizer, SeqExample,
    SeqNet, Target, Tensor, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn labels(rng: &mut ChaCha8Rng, n: usize) -> Target {
    Target::Labels((0..n).map(|_| rng.gen_bool(0.5)).collect())
}

#[test]
fn dense_softmax_gradients() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let net = DenseNet::<f64>::new(6, Some(5), 4, Loss::SoftmaxCrossEntropy, seed);
        let ex = DenseExample { x: rand_vec(&mut rng, 6), target: Target::Class(rng.gen_range(0..4)) };
        let err = grad_check(&net, &ex, EPS, 200, seed);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn dense_sigmoid_gradients() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let net = DenseNet::<f64>::new(5, Some(6), 7, Loss::SigmoidBinaryCrossEntropy, seed);
        let ex = DenseExample { x: rand_vec(&mut rng, 5), target: labels(&mut rng, 7) };
        let err = grad_check(&net, &ex, EPS, 200, seed);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

fn seq_example(rng: &mut ChaCha8Rng, input: usize, len: usize, query: Option<usize>, target: Target) -> SeqExample<f64> {
    SeqExample {
        xs: (0..len).map(|_| rand_vec(rng, input)).collect(),
        query: query.map(|q| rand_vec(rng, q)),
        target,
    }
}

#[test]
fn recurrent_gradients() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let net = SeqNet::<f64>::new(4, 5, None, 3, Loss::SoftmaxCrossEntropy, seed);
        let y = Target::Class(rng.gen_range(0..3));
        let ex = seq_example(&mut rng, 4, 6, None, y);
        let err = grad_check(&net, &ex, EPS, 200, seed);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn attention_gradients() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let net = SeqNet::<f64>::new(4, 5, Some(Some(3)), 3, Loss::SoftmaxCrossEntropy, seed);
        let y = Target::Class(rng.gen_range(0..3));
        let ex = seq_example(&mut rng, 4, 5, Some(3), y);
        let err = grad_check(&net, &ex, EPS, 200, seed);
        assert!(err < TOL, "seed {seed}: {err}");

        let net = SeqNet::<f64>::new(4, 5, Some(None), 6, Loss::SigmoidBinaryCrossEntropy, seed);
        let y = labels(&mut rng, 6);
        let ex = seq_example(&mut rng, 4, 5, None, y);
        let err = grad_check(&net, &ex, EPS, 200, seed);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[derive(Clone)]
struct Constant;

impl Network<f64> for Constant {
    type Example = ();
    fn loss(&self, _: &(), _: Option<&mut Self>) -> Result<f64, NeuralError> {
        Ok(1.5)
    }
    fn params(&self) -> Vec<(String, &Tensor<f64>)> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor<f64>)> {
        Vec::new()
    }
}

#[test]
fn parameterless_model_checks_clean() {
    assert_eq!(grad_check(&Constant, &(), EPS, 200, 0), 0.0);
}

fn separable() -> Vec<DenseExample<f64>> {
    let pts = [
        ([1.0, 2.0], 0),
        ([2.0, 0.5], 0),
        ([0.3, 1.0], 0),
        ([1.5, 1.5], 0),
        ([-1.0, -0.5], 1),
        ([-2.0, 0.3], 1),
        ([0.2, -1.4], 1),
        ([-0.7, -2.0], 1),
    ];
    pts.iter().map(|(x, y)| DenseExample { x: x.to_vec(), target: Target::Class(*y) }).collect()
}

fn accuracy(net: &DenseNet<f64>, data: &[DenseExample<f64>]) -> f64 {
    let hits = data
        .iter()
        .filter(|e| {
            let l = net.logits(&e.x);
            let pred = pathwise_core::neural::argmax(&l);
            e.target == Target::Class(pred)
        })
        .count();
    hits as f64 / data.len() as f64
}

#[test]
fn separable_toy_set_is_learned() {
    let data = separable();
    let mut net = DenseNet::<f64>::new(2, None, 2, Loss::SoftmaxCrossEntropy, 1);
    let cfg = TrainConfig { seed: 1, learning_rate: 0.5, epochs: 200, batch_size: 4, optimizer: Optimizer::Sgd, clip: None };
    let curve = train(&mut net, &data, &cfg).unwrap();
    assert_eq!(curve.len(), 200);
    assert_eq!(accuracy(&net, &data), 1.0);
    assert!(curve.last().unwrap() < &curve[0]);
}

#[test]
fn training_is_deterministic() {
    let data = separable();
    let cfg = TrainConfig { seed: 9, epochs: 15, batch_size: 3, ..TrainConfig::default() };
    let run = || {
        let mut net = DenseNet::<f64>::new(2, Some(3), 2, Loss::SoftmaxCrossEntropy, 9);
        let curve = train(&mut net, &data, &cfg).unwrap();
        (net, curve)
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(ca.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), cb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a, b);
}

#[test]
fn bad_configs_are_rejected() {
    let data = separable();
    let mut net = DenseNet::<f64>::new(2, None, 2, Loss::SoftmaxCrossEntropy, 1);
    let zero = TrainConfig { epochs: 0, ..TrainConfig::default() };
    assert!(matches!(train(&mut net, &data, &zero), Err(NeuralError::Config(_))));
    let neg = TrainConfig { learning_rate: -1.0, ..TrainConfig::default() };
    assert!(matches!(train(&mut net, &data, &neg), Err(NeuralError::Config(_))));
    assert_eq!(train(&mut net, &[], &TrainConfig::default()), Err(NeuralError::EmptyData));
}

#[test]
fn divergence_reports_epoch() {
    let data = vec![DenseExample { x: vec![1e300, 1e300], target: Target::Class(0) }];
    let mut net = DenseNet::<f64>::new(2, None, 2, Loss::SoftmaxCrossEntropy, 1);
    let cfg = TrainConfig { optimizer: Optimizer::Sgd, clip: None, ..TrainConfig::default() };
    match train(&mut net, &data, &cfg) {
        Err(NeuralError::NonFiniteLoss { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let net = SeqNet::<f64>::new(3, 4, Some(Some(2)), 3, Loss::SoftmaxCrossEntropy, 5);
    let ck = Checkpoint::capture("seq", serde_json::json!({"hidden": 4}), None, &net);
    let back = Checkpoint::from_json(&ck.to_json()).unwrap();
    assert_eq!(back, ck);
    let mut fresh = net.zeroed();
    back.restore_into(&mut fresh).unwrap();
    assert_eq!(fresh, net);
    assert_eq!(back.id(), ck.id());
    assert!(back.expect_kind("other").is_err());

    let mut wrong = SeqNet::<f64>::new(3, 5, Some(Some(2)), 3, Loss::SoftmaxCrossEntropy, 5);
    assert!(back.restore_into(&mut wrong).is_err());
}
