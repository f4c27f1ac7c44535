#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.into())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

/// A CSV table with a single header row. Rows shorter than the header are
/// padded with empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert!(row.len() <= self.columns.len());
        self.rows.push(row);
    }

    /// Row with the named columns set and everything else empty.
    pub fn push_named(&mut self, cells: Vec<(&str, Cell)>) {
        let mut row = vec![Cell::Empty; self.columns.len()];
        for (name, cell) in cells {
            let k = self
                .columns
                .iter()
                .position(|c| c == name)
                .unwrap_or_else(|| panic!("no column {name}"));
            row[k] = cell;
        }
        self.rows.push(row);
    }

    pub fn render(&self, comment: &str, precision: usize) -> String {
        let mut writer = csv::Writer::from_writer(format!("# {comment}\n").into_bytes());
        writer
            .write_record(&self.columns)
            .expect("writing to memory");
        for row in &self.rows {
            let mut cells: Vec<String> = row.iter().map(|c| render_cell(c, precision)).collect();
            cells.resize(self.columns.len(), String::new());
            writer.write_record(&cells).expect("writing to memory");
        }
        let bytes = writer.into_inner().expect("flushing to memory");
        String::from_utf8(bytes).expect("cells are UTF-8")
    }
}

fn render_cell(cell: &Cell, precision: usize) -> String {
    match cell {
        Cell::Num(v) => format_significant(*v, precision),
        Cell::Int(v) => v.to_string(),
        Cell::Text(s) => s.clone(),
        Cell::Empty => String::new(),
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_significant(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // exponent after rounding to the requested digits
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(27.142857142857, 6), "27.1429");
        assert_eq!(format_significant(32.0, 6), "32");
        assert_eq!(format_significant(-0.0, 6), "0");
        assert_eq!(format_significant(1.5e-7, 6), "1.5e-7");
        assert_eq!(format_significant(1234567.0, 6), "1.23457e6");
        assert_eq!(format_significant(9.9999999, 6), "10");
        assert_eq!(format_significant(0.000123456789, 3), "0.000123");
        assert_eq!(format_significant(190.0 / 7.0, 17), "27.142857142857142");
    }

    #[test]
    fn renders_with_comment_and_padding() {
        let mut t = Table::new(["kind", "x", "y"]);
        t.push(vec!["a".into(), 1.0.into()]);
        t.push_named(vec![("y", Cell::Int(3)), ("kind", "b,c".into())]);
        let s = t.render("command=test", 6);
        assert_eq!(s, "# command=test\nkind,x,y\na,1,\n\"b,c\",,3\n");
    }
}
