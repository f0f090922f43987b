//! Fixture builders shared by the benchmarks.

use std::path::Path;

use metalake_core::table::{write_csv, TableData};

/// Writes `tables` CSV files of `rows` rows each under `dir`. Tables come in
/// groups of identical schemas that differ only in a date column.
pub fn write_forecast_lake(dir: &Path, tables: usize, rows: usize) {
    for t in 0..tables {
        let month = 3 + (t / 28) % 9;
        let day = 1 + t % 28;
        let date = format!("2024-{month:02}-{day:02}");
        let data = TableData {
            headers: vec!["time_ut".into(), "forecast_date".into(), "kp".into()],
            rows: (0..rows)
                .map(|r| {
                    vec![
                        Some(format!("{:02}-{:02}UT", (r * 3) % 24, (r * 3) % 24 + 3)),
                        Some(date.clone()),
                        Some(format!("{:.2}", 1.0 + (r % 7) as f64 * 0.67)),
                    ]
                })
                .collect(),
        };
        write_csv(
            &dir.join(format!("{month:02}{day:02}_{t}geomag_forecast.csv")),
            &data,
        )
        .expect("fixture table is writable");
    }
}
