use std::fmt::Write as _;
use std::path::Path;

use crate::error::{format_err, shape_err, Result};
use crate::projection::BevSpec;
use crate::scene::{PanopticEstimate, Point};
use crate::tensor::{Activation, Tensor};

/// `tanh(ln(n + 1))`, equal to `((n+1)^2 - 1) / ((n+1)^2 + 1)`. Lies in `[0, 1)`.
pub fn density_value(count: u64) -> f64 {
    Activation::Tanh.eval((count as f64 + 1.0).ln())
}

/// Class-agnostic center density over a BEV grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHeatmap {
    pub grid: BevSpec,
    /// Row-major shifted-foreground-point counts.
    pub counts: Vec<u64>,
    /// `(1, rows, cols)`, `density_value` of each count.
    pub values: Tensor,
}

/// Counts foreground points after shifting each by its predicted center
/// offset; shifted points outside the grid are dropped.
pub fn center_density(
    points: &[Point],
    panoptic: &PanopticEstimate,
    grid: &BevSpec,
) -> Result<DensityHeatmap> {
    grid.validate()?;
    if panoptic.len() != points.len() || panoptic.center_offsets.len() != points.len() {
        return shape_err(
            "center_density",
            format!(
                "{} points but panoptic arrays of {}",
                points.len(),
                panoptic.len()
            ),
        );
    }
    let (rows, cols) = (grid.rows(), grid.cols());
    let mut counts = vec![0u64; rows * cols];
    for ((p, fg), o) in points
        .iter()
        .zip(&panoptic.foreground_mask)
        .zip(&panoptic.center_offsets)
    {
        if !fg {
            continue;
        }
        if let Some(cell) = grid.bin_xy(p.x + o[0], p.y + o[1]) {
            counts[grid.flat(cell)] += 1;
        }
    }
    let values = Tensor::from_vec(
        1,
        rows,
        cols,
        counts.iter().map(|&c| density_value(c)).collect(),
    )?;
    Ok(DensityHeatmap {
        grid: *grid,
        counts,
        values,
    })
}

/// `x + x * h`, broadcasting `h` over channels.
pub fn apply_density(x: &Tensor, h: &DensityHeatmap) -> Result<Tensor> {
    if (h.values.height(), h.values.width()) != (x.height(), x.width()) {
        return shape_err(
            "apply_density",
            format!(
                "heatmap {:?} for features {:?}",
                h.values.shape(),
                x.shape()
            ),
        );
    }
    x.add(&x.mul_plane(&h.values)?)
}

impl DensityHeatmap {
    pub fn rows(&self) -> usize {
        self.values.height()
    }

    pub fn cols(&self) -> usize {
        self.values.width()
    }

    /// 16-bit binary PGM; pixel `(r, c)` is grid cell `(r, c)`, value
    /// `round(h * 65535)`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.cols(), self.rows()).into_bytes();
        for &v in self.values.data() {
            out.extend_from_slice(&((v * 65535.0).round() as u16).to_be_bytes());
        }
        out
    }

    /// `row,col,count,value` with one line per cell.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("row,col,count,value\n");
        let cols = self.cols();
        for (i, (&n, &v)) in self.counts.iter().zip(self.values.data()).enumerate() {
            writeln!(s, "{},{},{n},{v}", i / cols, i % cols).expect("string write");
        }
        s
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Decoded binary (`P5`) graymap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm16 {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

/// Parses a binary PGM. Samples are one byte when `maxval < 256`, otherwise
/// two bytes big-endian. Never panics on arbitrary input.
pub fn parse_pgm16(buf: &[u8]) -> Result<Pgm16> {
    const WHAT: &str = "pgm";
    if buf.len() < 2 || &buf[..2] != b"P5" {
        return format_err(WHAT, "missing P5 magic");
    }
    let mut pos = 2;
    let mut header = [0u64; 3];
    for slot in header.iter_mut() {
        // Whitespace and `#` comments separate header tokens.
        loop {
            match buf.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while buf.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while buf.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == start || pos - start > 9 {
            return format_err(WHAT, format!("bad header token at byte {start}"));
        }
        *slot = std::str::from_utf8(&buf[start..pos])
            .expect("ascii digits")
            .parse()
            .expect("at most 9 digits");
    }
    if !buf.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return format_err(WHAT, "header not terminated by whitespace");
    }
    pos += 1;
    let [width, height, maxval] = header;
    if !(1..=65535).contains(&maxval) {
        return format_err(WHAT, format!("maxval {maxval} outside 1..=65535"));
    }
    let bytes = if maxval < 256 { 1 } else { 2 };
    let (width, height) = (width as usize, height as usize);
    let body = &buf[pos..];
    let expect = width.checked_mul(height).and_then(|n| n.checked_mul(bytes));
    if expect != Some(body.len()) {
        return format_err(
            WHAT,
            format!(
                "{width}x{height} image needs {expect:?} bytes, found {}",
                body.len()
            ),
        );
    }
    let data: Vec<u16> = if bytes == 1 {
        body.iter().map(|&b| b as u16).collect()
    } else {
        body.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(v) = data.iter().find(|&&v| v as u64 > maxval) {
        return format_err(WHAT, format!("sample {v} exceeds maxval {maxval}"));
    }
    Ok(Pgm16 {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(density_value(0), 0.0);
        assert_eq!(density_value(1), 0.6);
        assert!((density_value(3) - 15.0 / 17.0).abs() < 1e-15);
    }

    fn heatmap(counts: Vec<u64>, rows: usize, cols: usize) -> DensityHeatmap {
        let values = counts.iter().map(|&c| density_value(c)).collect();
        DensityHeatmap {
            grid: BevSpec {
                x_min: 0.0,
                x_max: cols as f64,
                y_min: 0.0,
                y_max: rows as f64,
                cell: 1.0,
            },
            counts,
            values: Tensor::from_vec(1, rows, cols, values).unwrap(),
        }
    }

    #[test]
    fn single_cell_scales_one_column() {
        let mut counts = vec![0; 6];
        counts[4] = 1;
        let h = heatmap(counts, 2, 3);
        let x = Tensor::full(2, 2, 3, 2.0);
        let y = apply_density(&x, &h).unwrap();
        for c in 0..2 {
            for i in 0..6 {
                let expect = if i == 4 { 3.2 } else { 2.0 };
                assert!((y.channel(c)[i] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pgm_round_trip() {
        let h = heatmap(vec![0, 1, 3, 1000, 7, 2], 2, 3);
        let pgm = parse_pgm16(&h.to_pgm()).unwrap();
        assert_eq!((pgm.width, pgm.height, pgm.maxval), (3, 2, 65535));
        assert_eq!(pgm.data[0], 0);
        assert_eq!(pgm.data[1], 39321);
        let csv = h.to_csv_string();
        assert_eq!(csv.lines().nth(2), Some("0,1,1,0.6"));
    }

    #[test]
    fn pgm_rejects_garbage() {
        assert!(parse_pgm16(b"").is_err());
        assert!(parse_pgm16(b"P5\n2 2\n65535\n\x00").is_err());
        assert!(parse_pgm16(b"P5\n99999999999 2\n255\n").is_err());
        assert!(parse_pgm16(b"P5 # c\n1 1 200\n\xff").is_err());
        assert!(parse_pgm16(b"P5 # c\n1 1 255\n\xff").is_ok());
    }
}
