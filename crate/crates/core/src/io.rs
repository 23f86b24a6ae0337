//! Bit-stable output writers: CSV and legacy ASCII VTK.
//!
//! Floats are written with 17 significant digits in scientific notation so
//! they round-trip exactly; lines end in `\n` regardless of platform.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::StructuredTriMesh;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text with a header row; every row must match the header width.
pub fn csv_string<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> Result<String> {
    let mut out = header.join(",");
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "csv row {i} has {} cells, header has {}",
                row.len(),
                header.len()
            )));
        }
        let cells: Vec<&str> = row.iter().map(AsRef::as_ref).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    fs::write(path, csv_string(header, rows)?)?;
    Ok(())
}

/// Columns of equal length as a CSV with a leading `index` column.
pub fn columns_csv(names: &[&str], columns: &[&[f64]]) -> Result<String> {
    let len = columns.first().map_or(0, |c| c.len());
    if names.len() != columns.len() || columns.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidArgument("csv columns differ in length".into()));
    }
    let mut header = vec!["index"];
    header.extend_from_slice(names);
    let rows: Vec<Vec<String>> = (0..len)
        .map(|i| {
            std::iter::once(i.to_string())
                .chain(columns.iter().map(|c| fmt_f64(c[i])))
                .collect()
        })
        .collect();
    csv_string(&header, &rows)
}

/// Legacy VTK (3.0, ASCII) unstructured grid with point scalars.
///
/// Fields may be given on interior nodes (extended by zero) or on all nodes.
pub fn vtk_string(mesh: &StructuredTriMesh, title: &str, fields: &[(&str, &[f64])]) -> Result<String> {
    let nn = mesh.num_nodes();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(&title.replace('\n', " "));
    out.push('\n');
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {nn} double").unwrap();
    for p in mesh.coords() {
        writeln!(out, "{} {} 0", fmt_f64(p[0]), fmt_f64(p[1])).unwrap();
    }
    let tris = mesh.triangles();
    writeln!(out, "CELLS {} {}", tris.len(), 4 * tris.len()).unwrap();
    for t in tris {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {}", tris.len()).unwrap();
    for _ in tris {
        out.push_str("5\n");
    }
    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {nn}").unwrap();
    }
    for (name, values) in fields {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid VTK field name '{name}'")));
        }
        let full = if values.len() == mesh.num_interior() {
            mesh.extend_by_zero(values)
        } else if values.len() == nn {
            values.to_vec()
        } else {
            return Err(Error::InvalidArgument(format!(
                "field '{name}' has {} values, expected {} or {nn}",
                values.len(),
                mesh.num_interior()
            )));
        };
        writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in full {
            out.push_str(&fmt_f64(v));
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_vtk(path: &Path, mesh: &StructuredTriMesh, title: &str, fields: &[(&str, &[f64])]) -> Result<()> {
    fs::write(path, vtk_string(mesh, title, fields)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 5.0, 0.0, f64::MAX] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(5.0), "5.0000000000000000e0");
    }

    #[test]
    fn csv_shape() {
        let s = csv_string(&["a", "b"], &[vec!["1", "2"]]).unwrap();
        assert_eq!(s, "a,b\n1,2\n");
        assert!(csv_string(&["a"], &[vec!["1", "2"]]).is_err());
        let s = columns_csv(&["x"], &[&[0.5]]).unwrap();
        assert_eq!(s, "index,x\n0,5.0000000000000000e-1\n");
    }

    #[test]
    fn vtk_layout() {
        let mesh = StructuredTriMesh::friedrichs_keller(2).unwrap();
        let s = vtk_string(&mesh, "t", &[("u", &[1.0])]).unwrap();
        assert!(s.starts_with("# vtk DataFile Version 3.0\nt\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 9 double\n"));
        assert!(s.contains("CELLS 8 32\n3 0 1 4\n"));
        assert!(s.contains("CELL_TYPES 8\n5\n"));
        assert!(s.contains("POINT_DATA 9\nSCALARS u double 1\nLOOKUP_TABLE default\n"));
        let values: Vec<&str> = s.lines().rev().take(9).collect();
        assert_eq!(values.iter().filter(|v| **v == "1.0000000000000000e0").count(), 1);
        assert!(vtk_string(&mesh, "t", &[("u", &[1.0, 2.0])]).is_err());
        assert!(vtk_string(&mesh, "t", &[("a b", &[1.0])]).is_err());
    }
}
