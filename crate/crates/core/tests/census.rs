use std::path::PathBuf;

use dacel::ingest::{load_csv_files, CsvSchema};
use dacel::model::fit_logistic;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn census_rows_and_events() {
    let schema = CsvSchema::from_file(&root().join("configs/census.toml")).unwrap();
    let files = [
        root().join("data/census/adult.data"),
        root().join("data/census/adult.test"),
    ];
    let report = load_csv_files(&files, &schema).unwrap();
    assert_eq!(report.dataset.nrows(), 48_842);
    assert_eq!(report.dropped, 0);
    assert!((report.event_rate().unwrap() - 0.23929).abs() < 5e-5);
    assert_eq!(report.dataset.ncols(), 6);

    let beta = fit_logistic(&report.dataset, None).unwrap();
    // Reference values from an independent statsmodels fit of the same design.
    let reference = [
        -1.51366711,
        0.62986306,
        0.06343692,
        0.87668118,
        0.22631873,
        0.5207116,
    ];
    for (b, r) in beta.iter().zip(reference) {
        assert!((b - r).abs() < 1e-6, "{b} vs {r}");
    }
}
