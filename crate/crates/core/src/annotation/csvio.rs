use std::io::{Read, Write};

use chrono::{DateTime, Utc};

use super::{AnnotationError, AnnotationLabel, Stage};
use crate::ingest::ParagraphId;

pub const LABEL_CSV_HEADER: [&str; 5] = [
    "paragraph_id",
    "annotator_id",
    "value",
    "stage",
    "timestamp",
];

fn csv_err(line: u64, message: impl Into<String>) -> AnnotationError {
    AnnotationError::Csv {
        line,
        message: message.into(),
    }
}

pub fn write_labels_csv<'a>(
    out: impl Write,
    labels: impl IntoIterator<Item = &'a AnnotationLabel>,
) -> Result<(), AnnotationError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| csv_err(0, e.to_string());
    w.write_record(LABEL_CSV_HEADER).map_err(io)?;
    for l in labels {
        w.write_record([
            l.paragraph_id.as_str(),
            l.annotator_id.as_str(),
            if l.value == 1 { "1" } else { "0" },
            l.stage.as_str(),
            &l.timestamp.to_rfc3339(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads labels written by [`write_labels_csv`]; the header must list the
/// five columns in order.
pub fn read_labels_csv(input: impl Read) -> Result<Vec<AnnotationLabel>, AnnotationError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| csv_err(1, e.to_string()))?;
    if header.iter().map(str::trim).ne(LABEL_CSV_HEADER) {
        return Err(csv_err(
            1,
            format!("header must be `{}`", LABEL_CSV_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record =
            record.map_err(|e| csv_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let value = match field(2) {
            "0" => 0,
            "1" => 1,
            other => return Err(csv_err(line, format!("value `{other}` is not 0 or 1"))),
        };
        let stage: Stage = field(3).parse().map_err(|e: String| csv_err(line, e))?;
        let timestamp = DateTime::parse_from_rfc3339(field(4))
            .map_err(|e| csv_err(line, format!("timestamp: {e}")))?
            .with_timezone(&Utc);
        if field(0).is_empty() || field(1).is_empty() {
            return Err(csv_err(line, "empty paragraph or annotator id"));
        }
        out.push(AnnotationLabel::new(
            ParagraphId::new(field(0)),
            field(1),
            value,
            stage,
            timestamp,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn csv_round_trip() {
        let labels = vec![
            AnnotationLabel::new(
                ParagraphId::new("WHC-35:00aa"),
                "ann,1",
                1,
                Stage::ActiveLearning,
                Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap(),
            )
            .unwrap(),
            AnnotationLabel::new(
                ParagraphId::new("ICHC-12:ff00"),
                "b",
                0,
                Stage::Adjudicated,
                Utc.with_ymd_and_hms(2024, 3, 2, 8, 30, 5).unwrap(),
            )
            .unwrap(),
        ];
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &labels).unwrap();
        assert!(buf.starts_with(b"paragraph_id,annotator_id,value,stage,timestamp\n"));
        assert_eq!(read_labels_csv(&buf[..]).unwrap(), labels);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad =
            "paragraph_id,annotator_id,value,stage,timestamp\nx,a,2,initial,2024-01-01T00:00:00Z\n";
        assert!(matches!(
            read_labels_csv(bad.as_bytes()),
            Err(AnnotationError::Csv { line: 2, .. })
        ));
        let no_header = "x,a,1,initial,2024-01-01T00:00:00Z\n";
        assert!(matches!(
            read_labels_csv(no_header.as_bytes()),
            Err(AnnotationError::Csv { line: 1, .. })
        ));
    }
}
