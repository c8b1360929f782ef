use convtran::encoding::absolute::*;

fn main() {
    let t = build_vanilla_ape(512, 512).unwrap();
    let curve = similarity_curve(&t);
    let center = 511usize;
    let seg: Vec<f64> = (0..=50).map(|k| curve[center + k].1).collect();
    for k in 0..50 {
        if seg[k + 1] > seg[k] + 1e-9 {
            println!("claim1 violation at K={} -> K={}: {} -> {} (delta {:.3e})", k, k + 1, seg[k], seg[k + 1], seg[k + 1] - seg[k]);
        }
    }
    println!("seg[0..8] = {:?}", &seg[0..8]);
    println!("seg[43..51] = {:?}", &seg[43..51]);
    // how far can we go monotonically?
    let mut kmax = 0;
    for k in 0..510 {
        if curve[center + k + 1].1 > curve[center + k].1 + 1e-9 { kmax = k; break; }
    }
    println!("first violation at K={}", kmax);
    // various tolerances
    for tol in [1e-9, 1e-6, 1e-3, 1e-2, 1e-1] {
        println!("tol {tol:.0e}: violations on [0,50] = {}", monotonicity_violations(&seg, tol));
    }
}
