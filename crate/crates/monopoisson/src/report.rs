//! CSV output: one header line, dot decimals, 17 significant digits.

use monopoisson_core::diagnostics::StatReport;

/// Formats a real with 17 significant digits, which round-trips every `f64`.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `header` and `rows` as CSV.
pub fn to_csv<I, R>(header: &[&str], rows: I) -> Result<String, csv::Error>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV fields are UTF-8"))
}

pub const REPORT_HEADER: [&str; 6] = ["name", "statistic", "threshold", "passed", "sample_size", "seed"];

pub fn reports_to_csv(reports: &[StatReport]) -> Result<String, csv::Error> {
    to_csv(
        &REPORT_HEADER,
        reports.iter().map(|r| {
            vec![
                r.name.clone(),
                real(r.statistic),
                real(r.threshold),
                r.passed.to_string(),
                r.sample_size.to_string(),
                r.seed.map(|s| s.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(real(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn csv_layout() {
        let s = to_csv(&["x", "g"], [vec![real(0.0), real(1.0)]]).unwrap();
        assert_eq!(s, "x,g\n0.0000000000000000e0,1.0000000000000000e0\n");
    }
}
