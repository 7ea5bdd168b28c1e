//! Shared experiment plumbing: mesh construction from config, CSV output,
//! and solution export.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use flowmg_core::disc::{FieldLayout, SolutionField};
use flowmg_core::mesh::{write_vtk, Geometry, Mesh};
use flowmg_core::Scalar;

use crate::config::{Config, ConfigError};

pub fn build_geometry(cfg: &Config) -> Result<Geometry, ConfigError> {
    let kind = cfg.require("mesh", "geometry")?;
    match kind {
        "rectangle" => {
            let r = cfg.floats("mesh", "rect")?;
            if r.len() != 4 {
                return Err(ConfigError("[mesh] rect needs x0 y0 x1 y1".into()));
            }
            Ok(Geometry::Rectangle {
                x0: r[0],
                y0: r[1],
                x1: r[2],
                y1: r[3],
            })
        }
        "channel" => {
            let c = cfg.floats("mesh", "channel")?;
            if c.len() != 2 {
                return Err(ConfigError("[mesh] channel needs length height".into()));
            }
            let obstacle = match cfg.get("mesh", "obstacle") {
                Some(_) => {
                    let o = cfg.floats("mesh", "obstacle")?;
                    if o.len() != 4 {
                        return Err(ConfigError("[mesh] obstacle needs x0 y0 x1 y1".into()));
                    }
                    Some([o[0], o[1], o[2], o[3]])
                }
                None => None,
            };
            Ok(Geometry::Channel {
                length: c[0],
                height: c[1],
                obstacle,
            })
        }
        "tjunction" => Ok(Geometry::TJunction),
        "annulus" => {
            let a = cfg.floats("mesh", "annulus")?;
            if a.len() != 2 {
                return Err(ConfigError("[mesh] annulus needs r_inner r_outer".into()));
            }
            Ok(Geometry::Annulus {
                r_inner: a[0],
                r_outer: a[1],
            })
        }
        other => Err(ConfigError(format!("unknown geometry `{other}`"))),
    }
}

pub fn build_mesh(cfg: &Config) -> Result<Arc<Mesh>, ConfigError> {
    let geometry = build_geometry(cfg)?;
    let subs = cfg
        .usizes_or("mesh", "subdivisions", &[1, 1])?
        .into_iter()
        .map(|v| v as u32)
        .collect::<Vec<_>>();
    if subs.len() != 2 {
        return Err(ConfigError("[mesh] subdivisions needs two integers".into()));
    }
    let mut mesh = Mesh::create(geometry, (subs[0], subs[1]))
        .map_err(|e| ConfigError(format!("mesh construction: {e}")))?;
    let refinements = cfg.usize_or("mesh", "refine", 0)?;
    for _ in 0..refinements {
        mesh = refine_all(&mesh);
    }
    Ok(Arc::new(mesh))
}

pub fn refine_all(mesh: &Mesh) -> Mesh {
    let flags: BTreeSet<usize> = mesh.active_ids().iter().copied().collect();
    mesh.refine(&flags).expect("uniform refinement")
}

/// Deterministic CSV writer: fixed float formatting, one header row.
pub struct CsvFile {
    lines: Vec<String>,
}

impl CsvFile {
    pub fn new(header: &[&str]) -> CsvFile {
        CsvFile {
            lines: vec![header.join(",")],
        }
    }

    pub fn row(&mut self, fields: &[CsvField]) {
        let cells: Vec<String> = fields.iter().map(|f| f.format()).collect();
        self.lines.push(cells.join(","));
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::File::create(path)?;
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    pub fn contents(&self) -> String {
        self.lines.join("\n")
    }
}

pub enum CsvField {
    Int(i64),
    UInt(usize),
    Num(Scalar),
    Text(String),
}

impl CsvField {
    fn format(&self) -> String {
        match self {
            CsvField::Int(v) => v.to_string(),
            CsvField::UInt(v) => v.to_string(),
            CsvField::Num(v) => format!("{v:.8e}"),
            CsvField::Text(s) => s.clone(),
        }
    }
}

/// Export a velocity/pressure field over its mesh as legacy VTK.
pub fn export_field(
    path: &Path,
    mesh: &Mesh,
    layout: &FieldLayout,
    values: &[Scalar],
    degrees: &[u8],
    ranks: Option<&[usize]>,
) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let field = SolutionField {
        layout: layout.clone(),
        values: values.to_vec(),
    };
    let ux = field.corner_values(0);
    let uy = field.corner_values(1);
    let mut vel = Vec::with_capacity(3 * ux.len());
    for i in 0..ux.len() {
        vel.push(ux[i]);
        vel.push(uy[i]);
        vel.push(0.0);
    }
    let has_pressure = layout.n_components() >= 3;
    let pressure = if has_pressure {
        field.corner_values(2)
    } else {
        vec![0.0; ux.len()]
    };
    let levels: Vec<Scalar> = mesh.active_cells().map(|c| c.level() as Scalar).collect();
    let degree_data: Vec<Scalar> = degrees.iter().map(|&d| d as Scalar).collect();
    let rank_data: Vec<Scalar> = match ranks {
        Some(r) => r.iter().map(|&x| x as Scalar).collect(),
        None => vec![0.0; mesh.n_active()],
    };
    let mut buf = Vec::new();
    let mut cell_data: Vec<(&str, &[Scalar])> = vec![
        ("level", &levels),
        ("owner_rank", &rank_data),
        ("degree", &degree_data),
    ];
    cell_data.retain(|(_, v)| !v.is_empty());
    let point_data: Vec<(&str, usize, &[Scalar])> = vec![
        ("velocity", 3, &vel),
        ("pressure", 1, &pressure),
    ];
    write_vtk(&mut buf, mesh, &cell_data, &point_data)?;
    std::fs::write(path, buf)
}
