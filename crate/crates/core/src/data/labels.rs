use std::path::Path;

use crate::error::{Error, Result};

/// Per-pixel class ids; 0 marks an unlabeled pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    n_class: usize,
}

impl LabelMap {
    /// `n_class` is taken as the largest id present.
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        let n_class = labels.iter().copied().max().unwrap_or(0) as usize;
        Self::with_n_class(height, width, labels, n_class)
    }

    pub fn with_n_class(
        height: usize,
        width: usize,
        labels: Vec<u32>,
        n_class: usize,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Shape(format!(
                "label map has {} entries, expected {}x{}",
                labels.len(),
                height,
                width
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize > n_class) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} exceeds n_class {n_class}"
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
            n_class,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_class(&self) -> usize {
        self.n_class
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Labeled pixel coordinates in row-major order.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0)
            .map(move |(i, _)| (i / self.width, i % self.width))
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut labels = Vec::new();
        let mut width = None;
        let mut height = 0;
        for record in rdr.records() {
            let record = record.map_err(|e| Error::format("label map", e.to_string()))?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            match width {
                None => width = Some(record.len()),
                Some(w) if w != record.len() => {
                    return Err(Error::format(
                        "label map",
                        format!("row {height} has {} columns, expected {w}", record.len()),
                    ))
                }
                _ => {}
            }
            for field in record.iter() {
                let v: u32 = field.parse().map_err(|_| {
                    Error::format("label map", format!("row {height}: bad label {field:?}"))
                })?;
                labels.push(v);
            }
            height += 1;
        }
        let width = width.ok_or_else(|| Error::format("label map", "empty file"))?;
        Self::new(height, width, labels)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for row in self.labels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_csv() {
        let map = LabelMap::from_reader("0,1,2\n3,0,1\n".as_bytes()).unwrap();
        assert_eq!((map.height(), map.width(), map.n_class()), (2, 3, 3));
        assert_eq!(map.get(1, 0), 3);
        assert_eq!(map.labeled_count(), 4);
        assert_eq!(map.to_csv_string(), "0,1,2\n3,0,1\n");
    }

    #[test]
    fn ragged_csv_rejected() {
        assert!(LabelMap::from_reader("0,1\n3\n".as_bytes()).is_err());
    }

    #[test]
    fn negative_rejected() {
        assert!(LabelMap::from_reader("0,-1\n".as_bytes()).is_err());
    }
}
