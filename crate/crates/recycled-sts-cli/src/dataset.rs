//! Ingestion of dataset CSV files.
//!
//! Schema: UTF-8, comma-separated, `.` decimal, header `id,time,value`
//! required. Rows may be grouped or ungrouped by id; grouping preserves
//! first-appearance order. Parse errors name the 1-based file line.

use std::path::Path;

use recycled_sts::nls::IndividualData;
use recycled_sts::sts::HierDataset;

use crate::AppError;

pub fn load_dataset(path: &Path) -> Result<HierDataset, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
    parse_dataset(&text).map_err(|msg| AppError::Input(format!("{}: {msg}", path.display())))
}

pub fn parse_dataset(text: &str) -> Result<HierDataset, String> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i, l),
            None => return Err("empty file".to_string()),
        }
    };
    let normalized: Vec<String> = header
        .1
        .split(',')
        .map(|f| f.trim().to_ascii_lowercase())
        .collect();
    if normalized != ["id", "time", "value"] {
        return Err(format!(
            "line {}: expected header `id,time,value`, got `{}`",
            header.0 + 1,
            header.1.trim()
        ));
    }

    // Group rows by id, preserving first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, (Vec<f64>, Vec<f64>)> =
        std::collections::HashMap::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(format!(
                "line {lineno}: expected 3 comma-separated fields, got {}",
                fields.len()
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(format!("line {lineno}: empty id"));
        }
        let time: f64 = fields[1]
            .parse()
            .map_err(|_| format!("line {lineno}: time `{}` is not a number", fields[1]))?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| format!("line {lineno}: value `{}` is not a number", fields[2]))?;
        if !time.is_finite() || time < 0.0 {
            return Err(format!(
                "line {lineno}: time must be finite and nonnegative, got {time}"
            ));
        }
        if !value.is_finite() {
            return Err(format!("line {lineno}: value must be finite, got {value}"));
        }
        let entry = groups.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            (Vec::new(), Vec::new())
        });
        entry.0.push(time);
        entry.1.push(value);
    }

    let mut individuals = Vec::with_capacity(order.len());
    for id in order {
        let (x, y) = groups.remove(&id).expect("grouped");
        individuals.push(IndividualData::new(id, x, y).map_err(|e| e.to_string())?);
    }
    HierDataset::new(individuals).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grouped_and_ungrouped_rows() {
        let text = "id,time,value\na,0.5,1.0\nb,0.5,2.0\na,1.5,0.8\nb,1.5,1.6\n";
        let ds = parse_dataset(text).unwrap();
        assert_eq!(ds.individuals.len(), 2);
        assert_eq!(ds.individuals[0].id, "a");
        assert_eq!(ds.individuals[0].x, vec![0.5, 1.5]);
        assert_eq!(ds.individuals[1].y, vec![2.0, 1.6]);
    }

    #[test]
    fn malformed_row_names_line_number() {
        let text = "id,time,value\na,0.5,1.0\na,b,c\n";
        let err = parse_dataset(text).unwrap_err();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn header_required() {
        let err = parse_dataset("a,0.5,1.0\n").unwrap_err();
        assert!(err.contains("header"), "{err}");
    }

    #[test]
    fn negative_time_rejected() {
        let text = "id,time,value\na,-1.0,1.0\n";
        let err = parse_dataset(text).unwrap_err();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn byte_order_mark_tolerated() {
        let text = "\u{feff}id,time,value\na,0.5,1.0\na,1.5,0.8\nb,0.5,2.0\nb,1.5,1.6\n";
        let ds = parse_dataset(text).unwrap();
        assert_eq!(ds.individuals.len(), 2);
    }
}
