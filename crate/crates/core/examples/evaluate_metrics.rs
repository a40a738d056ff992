//! Builds a 6-class confusion matrix, prints metrics, collapses it to the
//! 3-class scheme and writes the report with its SVG plots.

use screamkit::dataset::{ClassScheme, ThreeClassMapping};
use screamkit::eval::{
    collapse_confusion, confusion_matrix_named, emit_report, emit_report_plots, metrics,
    EvalReport, ExperimentDescriptor,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names6 = ClassScheme::Six.class_names();
    let names6: Vec<&str> = names6.iter().map(String::as_str).collect();
    let y_true = [0, 0, 0, 1, 1, 2, 2, 2, 3, 3, 4, 4, 5, 5, 5];
    let y_pred = [0, 0, 1, 1, 2, 2, 2, 3, 3, 1, 4, 0, 5, 5, 2];
    let cm6 = confusion_matrix_named(&y_true, &y_pred, &names6)?;
    let m = metrics(&cm6);
    println!(
        "6-class: acc {:.3} bal_acc {:.3} macro_f1 {:.3}",
        m.acc, m.bal_acc, m.macro_f1
    );
    for (name, r) in names6.iter().zip(&m.class_recall) {
        println!("  recall {name:<8} {r:.3}");
    }

    let names3 = ClassScheme::Three.class_names();
    let names3: Vec<&str> = names3.iter().map(String::as_str).collect();
    let cm3 = collapse_confusion(&cm6, &ThreeClassMapping::default().table(), &names3)?;
    println!("collapsed to 3 classes: {:?}", cm3.counts);

    let dir = std::env::temp_dir().join("screamkit_eval_demo");
    let report = EvalReport::new(
        ExperimentDescriptor {
            feature_set: "fs1".into(),
            classifier: "svm".into(),
            classes: 6,
            seed: 0,
        },
        &cm6,
    );
    std::fs::create_dir_all(&dir)?;
    emit_report(&report, &dir.join("demo.json"))?;
    emit_report_plots(&report, &dir, "demo")?;
    println!("report and plots written to {}", dir.display());
    Ok(())
}
