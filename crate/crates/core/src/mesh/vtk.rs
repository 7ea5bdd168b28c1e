//! Legacy-ASCII VTK export of meshes and attached data.

use std::io::Write;

use crate::num::Scalar;

use super::Mesh;

/// Write the active mesh as an unstructured grid of linear quads (VTK cell
/// type 9). `cell_data` holds named per-active-cell arrays; `point_data`
/// holds named per-corner arrays with the given number of components
/// (velocity is exported as a 3-vector with z = 0).
pub fn write_vtk<W: Write>(
    w: &mut W,
    mesh: &Mesh,
    cell_data: &[(&str, &[Scalar])],
    point_data: &[(&str, usize, &[Scalar])],
) -> std::io::Result<()> {
    // dedupe corner points
    let mut points: Vec<[Scalar; 2]> = Vec::new();
    let mut point_id = std::collections::HashMap::new();
    let mut conn = Vec::with_capacity(mesh.n_active());
    for c in mesh.active_cells() {
        let mut ids = [0usize; 4];
        for (k, v) in c.vertices.iter().enumerate() {
            let bits = (v[0].to_bits(), v[1].to_bits());
            let id = *point_id.entry(bits).or_insert_with(|| {
                points.push(*v);
                points.len() - 1
            });
            ids[k] = id;
        }
        conn.push(ids);
    }

    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "flowmg mesh")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(w, "{:.17e} {:.17e} 0.0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {} {}", conn.len(), conn.len() * 5)?;
    for ids in &conn {
        writeln!(w, "4 {} {} {} {}", ids[0], ids[1], ids[2], ids[3])?;
    }
    writeln!(w, "CELL_TYPES {}", conn.len())?;
    for _ in &conn {
        writeln!(w, "9")?;
    }
    if !cell_data.is_empty() {
        writeln!(w, "CELL_DATA {}", conn.len())?;
        for (name, values) in cell_data {
            assert_eq!(values.len(), conn.len(), "cell data length");
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(w, "{v:.17e}")?;
            }
        }
    }
    if !point_data.is_empty() {
        writeln!(w, "POINT_DATA {}", points.len())?;
        for (name, comps, values) in point_data {
            assert_eq!(values.len(), comps * points.len(), "point data length");
            if *comps == 1 {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in values.chunks(1) {
                    writeln!(w, "{:.17e}", v[0])?;
                }
            } else {
                writeln!(w, "VECTORS {name} double")?;
                for v in values.chunks(*comps) {
                    let z = if *comps > 2 { v[2] } else { 0.0 };
                    writeln!(w, "{:.17e} {:.17e} {:.17e}", v[0], v[1], z)?;
                }
            }
        }
    }
    Ok(())
}

/// Corner point list in the same order `write_vtk` assigns point ids.
pub fn corner_points(mesh: &Mesh) -> Vec<[Scalar; 2]> {
    let mut points: Vec<[Scalar; 2]> = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for c in mesh.active_cells() {
        for v in &c.vertices {
            let bits = (v[0].to_bits(), v[1].to_bits());
            seen.entry(bits).or_insert_with(|| {
                points.push(*v);
                points.len() - 1
            });
        }
    }
    points
}
