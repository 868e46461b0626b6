//! Run artifacts: snapshot CSVs, the energy history, metadata and a plot script.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::BoundaryKind;
use crate::error::{Error, Result};
use crate::mc::McResult;
use crate::solver::{energy_bound_check, RunOutput, Simulation, Snapshot};

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
# Plots every snapshot CSV and the energy history in this directory.
import csv, glob, os, sys
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))

def read(path):
    with open(path) as f:
        rows = list(csv.reader(f))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]

for path in sorted(glob.glob(os.path.join(here, "snapshot_*.csv"))):
    head, rows = read(path)
    fig, ax = plt.subplots()
    if len(head) == 2:
        ax.plot([r[0] for r in rows], [r[1] for r in rows])
        ax.set_xlabel(head[0]); ax.set_ylabel("u00")
    else:
        xs = sorted({r[0] for r in rows}); zs = sorted({r[1] for r in rows})
        grid = {(r[0], r[1]): r[2] for r in rows}
        img = [[grid[(x, z)] for x in xs] for z in zs]
        m = ax.pcolormesh(xs, zs, img, shading="nearest")
        fig.colorbar(m, ax=ax)
        ax.set_xlabel(head[0]); ax.set_ylabel(head[1])
    ax.set_title(os.path.basename(path))
    fig.savefig(path[:-4] + ".png", dpi=120)
    plt.close(fig)

path = os.path.join(here, "energy.csv")
if os.path.exists(path):
    head, rows = read(path)
    fig, ax = plt.subplots()
    ax.plot([r[0] for r in rows], [r[1] for r in rows], label="E")
    ax.plot([r[0] for r in rows], [r[2] for r in rows], "--", label="bound")
    ax.set_xlabel("t"); ax.legend()
    fig.savefig(os.path.join(here, "energy.png"), dpi=120)
"#;

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// File name for a snapshot label, e.g. `snapshot_0.25.csv`.
pub fn snapshot_file(label: f64) -> String {
    format!("snapshot_{label}.csv")
}

pub fn snapshot_csv(
    axes: &[&str],
    coords: &[Vec<f64>],
    values: &[f64],
    extra: Option<(&str, &[f64])>,
) -> String {
    let mut s = axes.join(",");
    s.push_str(",u00");
    if let Some((name, _)) = extra {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    for (i, (c, v)) in coords.iter().zip(values).enumerate() {
        for x in c {
            let _ = write!(s, "{x:.10e},");
        }
        let _ = write!(s, "{v:.12e}");
        if let Some((_, e)) = extra {
            let _ = write!(s, ",{:.12e}", e[i]);
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Serialize)]
struct FaceMeta {
    face: String,
    kind: &'static str,
    alpha: f64,
    l_inverse_norm: f64,
    m_norm: f64,
    bound_constant: f64,
}

/// Writes a solver run into `dir`, returning the files written.
pub fn write_run(
    dir: &Path,
    sim: &Simulation,
    out: &RunOutput,
    runtime_s: f64,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = &sim.config;
    let axes: Vec<&str> = cfg.domain.axes.iter().map(String::as_str).collect();
    let mut files = Vec::new();
    for snap in &out.snapshots {
        let path = dir.join(snapshot_file(snap.label));
        write(&path, &snapshot_csv(&axes, &snap.coords, &snap.u00, None))?;
        files.push(path);
    }
    let c = sim.disc.bound_constant();
    let bound = out.log.bound(c);
    let mut energy = String::from("t,E,bound\n");
    for i in 0..out.log.len() {
        let _ = writeln!(
            energy,
            "{:.10e},{:.12e},{:.12e}",
            out.log.t[i], out.log.energy[i], bound[i]
        );
    }
    let path = dir.join("energy.csv");
    write(&path, &energy)?;
    files.push(path);

    let faces: Vec<FaceMeta> = sim
        .disc
        .faces
        .iter()
        .map(|f| FaceMeta {
            face: f.face.label(),
            kind: match f.kind {
                BoundaryKind::Onsager => "onsager",
                BoundaryKind::UnstableMarshak => "unstable_marshak",
            },
            alpha: f.alpha,
            l_inverse_norm: f.l_inverse_norm,
            m_norm: f.m_norm,
            bound_constant: f.bound_constant(),
        })
        .collect();
    let check = energy_bound_check(&out.log, c);
    let time_mapping = cfg.integration.energy.map(|e| {
        json!({
            "energy_max_kev": e.max,
            "energy_min_kev": e.min,
            "kev_per_unit_time": cfg.from_time(0.0) - cfg.from_time(1.0),
            "relation": "energy = energy_max - kev_per_unit_time * t",
        })
    });
    let meta = json!({
        "scenario": cfg,
        "order": cfg.model.order,
        "moments": sim.disc.system.basis().dim(),
        "grid": {
            "axes": cfg.domain.axes,
            "lower": cfg.domain.lower,
            "upper": cfg.domain.upper,
            "cells": cfg.domain.cells,
            "h_min": sim.disc.h_min(),
        },
        "dt": out.dt,
        "steps": out.steps,
        "cfl": cfg.integration.cfl,
        "lambda_max": sim.disc.lambda_max,
        "bound_constant": c,
        "energy_bound": check,
        "faces": faces,
        "units": if cfg.energy_mode() { "length nm, energy keV, t = pseudo-time in nm" } else { "dimensionless" },
        "time_mapping": time_mapping,
        "runtime_s": runtime_s,
    });
    let path = dir.join("metadata.json");
    write(
        &path,
        &serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )?;
    files.push(path);
    let path = dir.join("plot.py");
    write(&path, PLOT_SCRIPT)?;
    files.push(path);
    Ok(files)
}

/// Writes oracle tallies as `mc_<label>.csv` with a `std_err` column.
pub fn write_mc(dir: &Path, axes: &[&str], result: &McResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for t in &result.tallies {
        let path = dir.join(format!("mc_{}.csv", t.label));
        write(
            &path,
            &snapshot_csv(axes, &t.coords, &t.value, Some(("std_err", &t.std_err))),
        )?;
        files.push(path);
    }
    let path = dir.join("mc_metadata.json");
    let meta = json!({
        "particles": result.particles,
        "seed": result.seed,
        "batches": result.batches,
        "windows": result.tallies.iter().map(|t| json!({"label": t.label, "t": t.t, "window": t.window})).collect::<Vec<_>>(),
    });
    write(
        &path,
        &serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )?;
    files.push(path);
    Ok(files)
}

/// Reads a snapshot CSV written by [`write_run`].
pub fn read_snapshot(path: &Path, label: f64) -> Result<Snapshot> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = head.split(',').collect();
    let ucol = cols
        .iter()
        .position(|c| *c == "u00")
        .ok_or_else(|| Error::InvalidInput(format!("{} has no u00 column", path.display())))?;
    let mut coords = Vec::new();
    let mut u00 = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        coords.push(vals[..ucol].to_vec());
        u00.push(vals[ucol]);
    }
    Ok(Snapshot {
        t: f64::NAN,
        label,
        coords,
        u00,
    })
}
