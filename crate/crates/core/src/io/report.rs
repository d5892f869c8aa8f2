//! Evaluation report as JSON and CSV, plus per-predictor scatter data.

use std::collections::BTreeMap;
use std::path::Path;

use super::{fmt_f64, read_to_string, write_file, Meta};
use crate::error::{Error, Result};
use crate::eval::{EvaluationReport, PlotPoint};

pub const UNDEFINED: &str = "UNDEFINED";

pub fn write_report(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))?;
    json.push('\n');
    write_file(path.as_ref(), json)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvaluationReport> {
    let path = path.as_ref();
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), fmt_f64)
}

/// `predictor,orientation,system,measure,n,pearson,kendall,t,significant,...`
/// with `UNDEFINED` for correlations of constant inputs.
pub fn write_report_csv(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    Meta(report.meta.clone()).write_header(&mut out);
    out.push_str(&format!("# alpha={}\n", fmt_f64(report.alpha)));
    out.push_str(
        "predictor,orientation,system,measure,n,pearson,kendall,t,significant,\
         t_kendall,significant_kendall,pooled_pearson,pooled_kendall\n",
    );
    for r in &report.rows {
        let fields = [
            r.predictor.clone(),
            r.orientation.to_string(),
            r.system.clone(),
            r.measure.to_string(),
            r.n.to_string(),
            opt(r.pearson),
            opt(r.kendall),
            opt(r.t),
            r.significant.to_string(),
            opt(r.t_kendall),
            r.significant_kendall.to_string(),
            opt(r.pooled_pearson),
            opt(r.pooled_kendall),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_file(path.as_ref(), out)
}

/// One `<dir>/<predictor>.tsv` per predictor:
/// `system \t measure \t query_id \t ground_truth \t predicted`.
pub fn write_plot_data(
    series: &BTreeMap<String, Vec<PlotPoint>>,
    meta: &Meta,
    dir: impl AsRef<Path>,
) -> Result<()> {
    for (name, points) in series {
        let mut out = String::new();
        meta.write_header(&mut out);
        out.push_str("system\tmeasure\tquery_id\tground_truth\tpredicted\n");
        for p in points {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                p.system,
                p.measure,
                p.query_id,
                fmt_f64(p.ground_truth),
                fmt_f64(p.predicted)
            ));
        }
        write_file(&dir.as_ref().join(format!("{name}.tsv")), out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ReportRow;
    use crate::model::{Measure, Orientation};

    fn report() -> EvaluationReport {
        let row = ReportRow {
            predictor: "score_variance".into(),
            orientation: Orientation::HigherIsBetter,
            system: "cos".into(),
            measure: Measure::PrecisionAt(100),
            n: 10,
            pearson: Some(0.123456789012345),
            kendall: None,
            t: Some(0.1),
            significant: false,
            t_kendall: None,
            significant_kendall: false,
            degenerate: false,
            pooled_pearson: None,
            pooled_kendall: None,
            folds: None,
        };
        EvaluationReport {
            meta: [("seed".to_string(), "7".to_string())].into(),
            alpha: 0.01,
            rows: vec![row],
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.json");
        write_report(&report(), &p).unwrap();
        assert_eq!(load_report(&p).unwrap(), report());
    }

    #[test]
    fn csv_marks_undefined() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.csv");
        write_report_csv(&report(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# seed=7\n# alpha=0.01\npredictor,"));
        assert!(text.contains("score_variance,HIGHER_IS_BETTER,cos,P@100,10,0.123456789012345,UNDEFINED,0.1,false"));
    }

    #[test]
    fn plot_files_per_predictor() {
        let dir = tempfile::tempdir().unwrap();
        let pts = vec![PlotPoint {
            system: "cos".into(),
            measure: Measure::AveragePrecision,
            query_id: "q1".into(),
            ground_truth: 0.5,
            predicted: 2.0,
        }];
        write_plot_data(&[("aqf".to_string(), pts)].into(), &Meta::new(), dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("aqf.tsv")).unwrap();
        assert!(text.ends_with("cos\tAP\tq1\t0.5\t2.0\n"));
    }
}
