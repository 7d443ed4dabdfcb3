use beamsight::dataset::{Manifest, Split};
use beamsight::mechanics::Label;
use beamsight::model::*;
use std::time::Instant;

#[test]
fn calibrate_epochs() {
    let dir = std::path::PathBuf::from("/root/calib_ds");
    let manifest = Manifest::read(&dir).unwrap();
    let arch = ArchitectureConfig { kind: ArchKind::ConvnetExtended, img_size: 64, number_of_labels: 3 };
    let mut model = build(arch, &Label::FREQUENCIES, 101).unwrap();
    // manual epoch loop: train 1 epoch at a time to instrument test MAPE
    for epoch in 0..24 {
        let cfg = TrainConfig { lr: 1e-5, batch_size: 100, max_epochs: 1, patience: 1, seed: beamsight::seeds::mix(55, epoch) };
        let t = Instant::now();
        let h = train(&mut model, &manifest, &dir, &cfg).unwrap();
        let m = evaluate(&model, &manifest, &dir, Split::Test).unwrap();
        println!("epoch {epoch}: val_mse {:.5} test MAPE {:.3}% [f1 {:.2}% f2 {:.2}% f3 {:.2}%] ({:.0}s)",
            h.epochs[0].val_mse, m.mape, m.per_label[0].mape, m.per_label[1].mape, m.per_label[2].mape,
            t.elapsed().as_secs_f64());
    }
}
