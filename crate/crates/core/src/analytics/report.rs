//! CSV renderings for the command line.

use std::fmt::Write;

use super::{ActivityLabel, CaptureComparison, CohortCurves, TimelineMatrix};
use crate::num::Real;

pub fn curves_csv<T: Real>(curves: &CohortCurves<T>) -> String {
    let mut out = String::from(
        "day,helped_progress,helped_progress_se,control_progress,control_progress_se,\
         helped_dropout,helped_dropout_se,control_dropout,control_dropout_se,helped_n,control_n,\
         paired_dropout_gap,paired_dropout_gap_se\n",
    );
    for (i, day) in curves.offsets.iter().enumerate() {
        let (hp, cp) = (curves.helped.progress[i], curves.control.progress[i]);
        let (hd, cd) = (curves.helped.dropout[i], curves.control.dropout[i]);
        let gap = curves.paired_dropout_gap[i];
        writeln!(
            out,
            "{day},{},{},{},{},{},{},{},{},{},{},{},{}",
            hp.mean,
            hp.std_err,
            cp.mean,
            cp.std_err,
            hd.mean,
            hd.std_err,
            cd.mean,
            cd.std_err,
            hp.n,
            cp.n,
            gap.mean,
            gap.std_err
        )
        .expect("string write");
    }
    out
}

fn matrix_rows<T: Real>(out: &mut String, group: &str, m: &TimelineMatrix<T>) {
    for (minute, row) in m.minutes.iter().zip(&m.proportions) {
        write!(out, "{group},{minute},{}", m.tickets).expect("string write");
        for label in ActivityLabel::ALL {
            write!(out, ",{}", row[label.index()]).expect("string write");
        }
        out.push('\n');
    }
}

pub fn capture_csv<T: Real>(cmp: &CaptureComparison<T>) -> String {
    let mut out = String::from("group,minute,tickets");
    for label in ActivityLabel::ALL {
        out.push(',');
        out.push_str(label.name());
    }
    out.push('\n');
    matrix_rows(&mut out, "matched", &cmp.matched);
    matrix_rows(&mut out, "unmatched", &cmp.unmatched);
    out
}
