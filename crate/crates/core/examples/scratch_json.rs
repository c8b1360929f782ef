use convtran::data::*;
fn main() {
    let ds = synth_order_task(8, 16, 3).unwrap();
    let path = std::env::temp_dir().join("dbg_ds.json");
    save_dataset(&ds, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    if ds.labels != back.labels { println!("labels differ"); }
    if ds.class_names != back.class_names { println!("names differ"); }
    if ds.meta != back.meta { println!("meta differ: {:?} vs {:?}", ds.meta, back.meta); }
    for (i, (a, b)) in ds.samples.iter().zip(&back.samples).enumerate() {
        if a != b {
            println!("sample {i} differs; shapes {:?} vs {:?}", a.shape(), b.shape());
            for (j, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
                if x.to_bits() != y.to_bits() {
                    println!("  cell {j}: {x:?} ({:x}) vs {y:?} ({:x})", x.to_bits(), y.to_bits());
                    if j > 20 { break; }
                }
            }
            break;
        }
    }
    println!("done");
}
