use super::{parse_f64, FormatError};
use crate::eval::{SampsonReport, TrajectoryReport};
use crate::geometry::Point2;
use crate::tracking::{Correspondence, CorrespondenceSet};

/// Label of the final row, holding the mean of every column.
pub const AGGREGATE_ROW: &str = "aggregate";

/// Numeric table keyed by one text column, one row per video.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub key: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ReportTable {
    /// Column means over the rows.
    pub fn aggregate(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.columns.len()).map(|c| self.rows.iter().map(|(_, v)| v[c]).sum::<f64>() / n).collect()
    }
}

fn csv_error(e: csv::Error) -> FormatError {
    match e.position() {
        Some(p) => FormatError::line(p.line() as usize, e.to_string()),
        None => FormatError::line(0, e.to_string()),
    }
}

fn write_csv(records: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(&r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("fields are utf-8")
}

fn read_csv(text: &str) -> Result<Vec<(usize, csv::StringRecord)>, FormatError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            Ok((line, rec))
        })
        .collect()
}

/// CSV with a header, one row per entry and a final aggregate row.
pub fn write_report(table: &ReportTable) -> String {
    let header = std::iter::once(table.key.clone()).chain(table.columns.iter().cloned()).collect();
    let row = |name: &str, v: &[f64]| std::iter::once(name.to_string()).chain(v.iter().map(|x| format!("{x:?}"))).collect();
    let rows = table.rows.iter().map(|(name, v)| row(name, v));
    write_csv(std::iter::once(header).chain(rows).chain(std::iter::once(row(AGGREGATE_ROW, &table.aggregate()))))
}

/// Reads a report back; the aggregate row must be present and is dropped.
pub fn read_report(text: &str) -> Result<ReportTable, FormatError> {
    let mut records = read_csv(text)?.into_iter();
    let (_, header) = records.next().ok_or_else(|| FormatError::line(1, "empty report"))?;
    if header.is_empty() {
        return Err(FormatError::line(1, "empty header"));
    }
    let key = header[0].to_string();
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut last_line = 1;
    let mut saw_aggregate = false;
    for (line, rec) in records {
        last_line = line;
        if saw_aggregate {
            return Err(FormatError::line(line, "rows after the aggregate row"));
        }
        if rec.len() != columns.len() + 1 {
            return Err(FormatError::line(line, format!("expected {} fields, found {}", columns.len() + 1, rec.len())));
        }
        let values = rec.iter().skip(1).enumerate().map(|(c, f)| parse_f64(f, line, &columns[c])).collect::<Result<Vec<_>, _>>()?;
        if &rec[0] == AGGREGATE_ROW {
            saw_aggregate = true;
        } else {
            rows.push((rec[0].to_string(), values));
        }
    }
    if !saw_aggregate {
        return Err(FormatError::line(last_line, "missing aggregate row"));
    }
    Ok(ReportTable { key, columns, rows })
}

pub fn trajectory_report_table(reports: &[(String, TrajectoryReport)]) -> ReportTable {
    ReportTable {
        key: "video".into(),
        columns: ["ate", "rpe_trans", "rpe_rot_deg", "registered_fraction"].map(String::from).to_vec(),
        rows: reports.iter().map(|(v, r)| (v.clone(), vec![r.ate, r.rpe_trans, r.rpe_rot, r.registered_fraction])).collect(),
    }
}

/// Per-video mean error plus a 0/1 column per threshold, so the aggregate row
/// carries the mean error and the accuracy at each threshold.
pub fn sampson_report_table(report: &SampsonReport) -> ReportTable {
    let mut columns = vec!["mean_px".to_string()];
    columns.extend(report.thresholds.iter().map(|t| format!("below_{t}px")));
    let rows = report
        .per_video
        .iter()
        .map(|(v, &e)| {
            let mut row = vec![e];
            row.extend(report.thresholds.iter().map(|&t| if e < t { 1.0 } else { 0.0 }));
            (v.clone(), row)
        })
        .collect();
    ReportTable { key: "video".into(), columns, rows }
}

const CORRESPONDENCE_HEADER: [&str; 7] = ["frame_i", "frame_j", "tracklet", "xi", "yi", "xj", "yj"];

/// One CSV row per match.
pub fn write_correspondences(set: &CorrespondenceSet) -> String {
    let header = CORRESPONDENCE_HEADER.map(String::from).to_vec();
    let rows = set.pairs.iter().flat_map(|(&(i, j), cs)| {
        cs.iter().map(move |c| {
            vec![i.to_string(), j.to_string(), c.tracklet.to_string(), format!("{:?}", c.p_i.x), format!("{:?}", c.p_i.y), format!("{:?}", c.p_j.x), format!("{:?}", c.p_j.y)]
        })
    });
    write_csv(std::iter::once(header).chain(rows))
}

pub fn read_correspondences(text: &str) -> Result<CorrespondenceSet, FormatError> {
    let mut records = read_csv(text)?.into_iter();
    match records.next() {
        Some((_, h)) if h.iter().eq(CORRESPONDENCE_HEADER) => {}
        _ => return Err(FormatError::line(1, format!("expected header {}", CORRESPONDENCE_HEADER.join(",")))),
    }
    let mut set = CorrespondenceSet::default();
    for (line, rec) in records {
        if rec.len() != 7 {
            return Err(FormatError::line(line, format!("expected 7 fields, found {}", rec.len())));
        }
        let int = |k: usize| rec[k].parse::<u64>().map_err(|_| FormatError::line(line, format!("bad {} {:?}", CORRESPONDENCE_HEADER[k], &rec[k])));
        let (i, j, tracklet) = (int(0)?, int(1)?, int(2)?);
        let (i, j) = (u32::try_from(i), u32::try_from(j));
        let (Ok(i), Ok(j)) = (i, j) else { return Err(FormatError::line(line, "frame index out of range")) };
        if i >= j {
            return Err(FormatError::line(line, format!("frame pair ({i}, {j}) is not ordered")));
        }
        let f = |k: usize| parse_f64(&rec[k], line, CORRESPONDENCE_HEADER[k]);
        set.insert(i, j, Correspondence { tracklet, p_i: Point2::new(f(3)?, f(4)?), p_j: Point2::new(f(5)?, f(6)?) });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn report_round_trip_with_aggregate() {
        let t = ReportTable {
            key: "video".into(),
            columns: vec!["a".into(), "b".into()],
            rows: vec![("x,1".into(), vec![0.1, 2.0]), ("y".into(), vec![0.2, 1e-300])],
        };
        let text = write_report(&t);
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("aggregate,"));
        let agg: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(agg, (0.1 + 0.2) / 2.0);
        assert_eq!(read_report(&text).unwrap(), t);
    }

    #[test]
    fn report_errors_name_the_line() {
        let bad = "video,a\nx,1\ny,zz\naggregate,1\n";
        assert!(matches!(read_report(bad), Err(FormatError::Line { line: 3, .. })));
        assert!(matches!(read_report("video,a\nx,1\n"), Err(FormatError::Line { line: 2, .. })));
        assert!(matches!(read_report("video,a\nx,1,2\naggregate,1\n"), Err(FormatError::Line { line: 2, .. })));
    }

    #[test]
    fn sampson_table_aggregate_is_accuracy() {
        let report = SampsonReport {
            per_video: BTreeMap::from([("a".into(), 3.0), ("b".into(), 12.0)]),
            thresholds: vec![5.0, 30.0],
            accuracy: vec![0.5, 1.0],
            mean: 7.5,
        };
        let t = sampson_report_table(&report);
        assert_eq!(t.columns, vec!["mean_px", "below_5px", "below_30px"]);
        assert_eq!(t.aggregate(), vec![7.5, 0.5, 1.0]);
    }

    #[test]
    fn correspondences_round_trip() {
        let mut s = CorrespondenceSet::default();
        s.insert(0, 4, Correspondence { tracklet: 7, p_i: Point2::new(1.5, 2.0), p_j: Point2::new(0.1, 0.2) });
        s.insert(0, 4, Correspondence { tracklet: 9, p_i: Point2::new(3.0, 4.0), p_j: Point2::new(5.0, 6.0) });
        s.insert(2, 3, Correspondence { tracklet: 1, p_i: Point2::new(-1.0, 1e10), p_j: Point2::new(0.0, 0.0) });
        assert_eq!(read_correspondences(&write_correspondences(&s)).unwrap(), s);
        let bad = "frame_i,frame_j,tracklet,xi,yi,xj,yj\n3,2,1,0,0,0,0\n";
        assert!(matches!(read_correspondences(bad), Err(FormatError::Line { line: 2, .. })));
    }
}
