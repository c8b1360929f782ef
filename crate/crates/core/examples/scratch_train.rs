use convtran::data::*;
use convtran::model::*;
use convtran::train::*;
use convtran::tensor::Tensor;
use std::time::Instant;

fn main() {
    // BasicMotions-shaped synthetic: 40 samples, 6 x 100, 4 classes
    let n = 40; let d_x = 6; let l = 100; let c = 4;
    let mut samples = Vec::new(); let mut labels = Vec::new();
    let mut rng = convtran::rng_from_seed(1);
    for i in 0..n {
        let t = convtran::tensor::uniform(&[d_x, l], -1.0, 1.0, &mut rng);
        samples.push(t); labels.push(i % c);
    }
    let ds = TimeSeriesDataset {
        samples, labels,
        class_names: (0..c).map(|k| format!("c{k}")).collect(),
        meta: DatasetMeta { problem_name: "fake".into(), equal_length: true, original_lengths: vec![l; n], series_length: l },
    };
    let cfg = ModelConfig::new(d_x, l, c);
    let mut net = ConvTranNet::new(cfg).unwrap();
    println!("params: {}", net.count_parameters());
    let tc = TrainConfig { max_epochs: 3, patience: 20, ..Default::default() };
    let t0 = Instant::now();
    let rep = fit(&mut net, &ds, &tc).unwrap();
    println!("3 epochs in {:.2}s ({:.2}s/epoch), report {:?}", t0.elapsed().as_secs_f64(), t0.elapsed().as_secs_f64()/3.0, rep);
    // single forward timing
    let x = Tensor::zeros(&[d_x, l]);
    let t0 = Instant::now();
    for _ in 0..10 { let _ = net.forward(&x).unwrap(); }
    println!("forward: {:.1} ms", t0.elapsed().as_secs_f64() * 100.0);
}
