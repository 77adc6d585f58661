//! SDPA sparse (`.dat-s`) export and solution import.
//!
//! The file carries the standard form directly: the rhs line is `b`, matrix 0
//! is the cost `C`, and matrix `i` is the constraint matrix `A_i`. Free
//! variables are split into nonnegative pairs in a trailing diagonal block;
//! a `*freevars k` comment records the split so a round trip reconstructs
//! the original structure. Solution files are expected in the common result
//! layout: the dual vector `y` on the first data line, then sparse entries
//! `matno blkno i j value` with matno 1 for the dual slack and 2 for the
//! primal matrix.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use super::{Block, RowData, SdpSolution, SdpStandardForm, SdpStatus};

#[derive(Debug, Error)]
pub enum SdpaParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn err(line: usize, msg: impl Into<String>) -> SdpaParseError {
    SdpaParseError::Malformed { line, msg: msg.into() }
}

pub fn format_sdpa(sdp: &SdpStandardForm) -> String {
    let mut out = String::new();
    if sdp.free_dim > 0 {
        writeln!(out, "*freevars {}", sdp.free_dim).unwrap();
    }
    if sdp.obj_const != 0.0 {
        writeln!(out, "*objconst {}", sdp.obj_const).unwrap();
    }
    let split = sdp.free_dim > 0;
    let nblocks = sdp.blocks.len() + usize::from(split);
    writeln!(out, "{}", sdp.m()).unwrap();
    writeln!(out, "{nblocks}").unwrap();
    let mut sizes: Vec<String> = sdp
        .blocks
        .iter()
        .map(|b| match b {
            Block::Psd(n) => format!("{n}"),
            Block::Diag(n) => format!("-{n}"),
        })
        .collect();
    if split {
        sizes.push(format!("-{}", 2 * sdp.free_dim));
    }
    writeln!(out, "{}", sizes.join(" ")).unwrap();
    writeln!(
        out,
        "{}",
        sdp.b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
    )
    .unwrap();
    let free_blk = sdp.blocks.len() + 1;
    let emit = |matno: usize,
                    blocks: &[(usize, super::SymEntries)],
                    free: &[(usize, f64)],
                    out: &mut String| {
        for (bi, entries) in blocks {
            for &(r, c, v) in entries {
                if v != 0.0 {
                    writeln!(out, "{matno} {} {} {} {v}", bi + 1, r + 1, c + 1).unwrap();
                }
            }
        }
        for &(fi, v) in free {
            if v != 0.0 {
                let p = 2 * fi + 1;
                writeln!(out, "{matno} {free_blk} {p} {p} {v}").unwrap();
                writeln!(out, "{matno} {free_blk} {} {} {}", p + 1, p + 1, -v).unwrap();
            }
        }
    };
    let c_blocks: Vec<(usize, super::SymEntries)> = sdp
        .c_blocks
        .iter()
        .enumerate()
        .map(|(bi, e)| (bi, e.clone()))
        .collect();
    let c_free: Vec<(usize, f64)> = sdp
        .c_free
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    emit(0, &c_blocks, &c_free, &mut out);
    for (i, row) in sdp.rows.iter().enumerate() {
        emit(i + 1, &row.blocks, &row.free, &mut out);
    }
    out
}

pub fn export_sdpa(sdp: &SdpStandardForm, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, format_sdpa(sdp))
}

/// Tokenize a line, treating braces, commas, parens, and `=` as whitespace.
fn tokens(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || "{}(),=".contains(c))
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn parse_sdpa(text: &str) -> Result<SdpStandardForm, SdpaParseError> {
    let mut free_dim = 0usize;
    let mut obj_const = 0.0f64;
    let mut data_lines: Vec<(usize, &str)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('*') || line.starts_with('"') {
            let toks = tokens(&line[1..]);
            if toks.first() == Some(&"freevars") {
                free_dim = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err(ln + 1, "bad freevars comment"))?;
            } else if toks.first() == Some(&"objconst") {
                obj_const = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err(ln + 1, "bad objconst comment"))?;
            }
            continue;
        }
        data_lines.push((ln + 1, line));
    }
    if data_lines.len() < 4 {
        return Err(err(text.lines().count(), "truncated file"));
    }
    let m: usize = tokens(data_lines[0].1)
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| err(data_lines[0].0, "expected number of constraints"))?;
    let nblocks: usize = tokens(data_lines[1].1)
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| err(data_lines[1].0, "expected number of blocks"))?;
    let size_toks = tokens(data_lines[2].1);
    if size_toks.len() != nblocks {
        return Err(err(data_lines[2].0, format!("expected {nblocks} block sizes")));
    }
    let mut blocks: Vec<Block> = Vec::new();
    for t in &size_toks {
        let v: i64 = t
            .parse()
            .map_err(|_| err(data_lines[2].0, format!("bad block size `{t}`")))?;
        if v > 0 {
            blocks.push(Block::Psd(v as usize));
        } else if v < 0 {
            blocks.push(Block::Diag((-v) as usize));
        } else {
            return Err(err(data_lines[2].0, "zero block size"));
        }
    }
    // undo the free-variable split: drop the trailing paired diagonal block
    let split = free_dim > 0;
    if split {
        match blocks.pop() {
            Some(Block::Diag(n)) if n == 2 * free_dim => {}
            _ => {
                return Err(err(
                    data_lines[2].0,
                    "freevars comment does not match trailing diagonal block",
                ))
            }
        }
    }
    let b_toks = tokens(data_lines[3].1);
    if b_toks.len() != m {
        return Err(err(data_lines[3].0, format!("expected {m} rhs values")));
    }
    let b: Vec<f64> = b_toks
        .iter()
        .map(|t| t.parse().map_err(|_| err(data_lines[3].0, format!("bad rhs `{t}`"))))
        .collect::<Result<_, _>>()?;

    let mut sdp = SdpStandardForm::new(blocks.clone(), free_dim);
    sdp.obj_const = obj_const;
    let mut rows: Vec<RowData> = vec![RowData::default(); m];
    let free_blk = blocks.len() + 1;
    for &(ln, line) in &data_lines[4..] {
        let t = tokens(line);
        if t.len() != 5 {
            return Err(err(ln, "expected `matno blkno i j value`"));
        }
        let matno: usize = t[0].parse().map_err(|_| err(ln, "bad matno"))?;
        let blk: usize = t[1].parse().map_err(|_| err(ln, "bad block number"))?;
        let i: usize = t[2].parse().map_err(|_| err(ln, "bad row index"))?;
        let j: usize = t[3].parse().map_err(|_| err(ln, "bad column index"))?;
        let v: f64 = t[4].parse().map_err(|_| err(ln, "bad value"))?;
        if matno > m || blk == 0 || blk > blocks.len() + usize::from(split) {
            return Err(err(ln, "matrix or block number out of range"));
        }
        if i == 0 || j == 0 || i > j {
            return Err(err(ln, "indices must be 1-based with i <= j"));
        }
        let is_free = split && blk == free_blk;
        if is_free {
            if i != j {
                return Err(err(ln, "off-diagonal entry in diagonal block"));
            }
            // only positive halves carry information; negative halves are the mirror
            if (i - 1) % 2 != 0 {
                continue;
            }
            let fi = (i - 1) / 2;
            if fi >= free_dim {
                return Err(err(ln, "free index out of range"));
            }
            if matno == 0 {
                sdp.c_free[fi] += v;
            } else {
                rows[matno - 1].free.push((fi, v));
            }
        } else {
            if let Block::Diag(_) = blocks[blk - 1] {
                if i != j {
                    return Err(err(ln, "off-diagonal entry in diagonal block"));
                }
            }
            let dim = blocks[blk - 1].dim();
            if j > dim {
                return Err(err(ln, "index exceeds block dimension"));
            }
            let target = if matno == 0 {
                &mut sdp.c_blocks[blk - 1]
            } else {
                let row = &mut rows[matno - 1];
                match row.blocks.iter_mut().find(|(bi, _)| *bi == blk - 1) {
                    Some((_, e)) => e,
                    None => {
                        row.blocks.push((blk - 1, Vec::new()));
                        &mut row.blocks.last_mut().unwrap().1
                    }
                }
            };
            target.push((i - 1, j - 1, v));
        }
    }
    for (row, bi) in rows.into_iter().zip(b) {
        sdp.add_row(row, bi);
    }
    Ok(sdp)
}

/// Read a solution file for a previously exported problem and reassemble it
/// against the original standard form. Status is classified from the KKT
/// residuals of the imported point.
pub fn import_solution(
    sdp: &SdpStandardForm,
    path: &Path,
) -> Result<SdpSolution, SdpaParseError> {
    let text = std::fs::read_to_string(path)?;
    let m = sdp.m();
    let split_dim = 2 * sdp.free_dim;
    let free_blk = sdp.blocks.len() + 1;

    let mut y: Option<Array1<f64>> = None;
    let mut s_blocks: Vec<Array2<f64>> = sdp
        .blocks
        .iter()
        .map(|b| Array2::zeros((b.dim(), b.dim())))
        .collect();
    let mut x_blocks = s_blocks.clone();
    let mut x_free_pairs = vec![0.0f64; split_dim];
    let mut s_free_pairs = vec![0.0f64; split_dim];

    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('*') || line.starts_with('"') {
            continue;
        }
        let t = tokens(line);
        if t.iter().any(|tok| tok.parse::<f64>().is_err()) {
            // tolerate labels such as `xVec` / `yMat` around the numbers
            let nums: Vec<&str> =
                t.into_iter().filter(|tok| tok.parse::<f64>().is_ok()).collect();
            if nums.is_empty() {
                continue;
            }
            if y.is_none() {
                if nums.len() != m {
                    return Err(err(ln, format!("expected {m} dual values")));
                }
                y = Some(Array1::from_iter(nums.iter().map(|v| v.parse().unwrap())));
            }
            continue;
        }
        if y.is_none() {
            if t.len() != m {
                return Err(err(ln, format!("expected {m} dual values")));
            }
            y = Some(Array1::from_iter(t.iter().map(|v| v.parse().unwrap())));
            continue;
        }
        if t.len() != 5 {
            return Err(err(ln, "expected `matno blkno i j value`"));
        }
        let matno: usize = t[0].parse().map_err(|_| err(ln, "bad matno"))?;
        let blk: usize = t[1].parse().map_err(|_| err(ln, "bad block number"))?;
        let i: usize = t[2].parse().map_err(|_| err(ln, "bad row index"))?;
        let j: usize = t[3].parse().map_err(|_| err(ln, "bad column index"))?;
        let v: f64 = t[4].parse().map_err(|_| err(ln, "bad value"))?;
        if !(1..=2).contains(&matno) {
            return Err(err(ln, "matno must be 1 (dual slack) or 2 (primal)"));
        }
        if i == 0 || j == 0 {
            return Err(err(ln, "indices are 1-based"));
        }
        if sdp.free_dim > 0 && blk == free_blk {
            if i != j || i > split_dim {
                return Err(err(ln, "bad free-block entry"));
            }
            if matno == 2 {
                x_free_pairs[i - 1] = v;
            } else {
                s_free_pairs[i - 1] = v;
            }
            continue;
        }
        if blk == 0 || blk > sdp.blocks.len() {
            return Err(err(ln, "block number out of range"));
        }
        let dim = sdp.blocks[blk - 1].dim();
        if i > dim || j > dim {
            return Err(err(ln, "index exceeds block dimension"));
        }
        let target = if matno == 2 { &mut x_blocks[blk - 1] } else { &mut s_blocks[blk - 1] };
        target[(i - 1, j - 1)] = v;
        target[(j - 1, i - 1)] = v;
    }
    let y = y.ok_or_else(|| err(text.lines().count(), "missing dual vector"))?;
    let x_free = Array1::from_iter(
        (0..sdp.free_dim).map(|fi| x_free_pairs[2 * fi] - x_free_pairs[2 * fi + 1]),
    );

    // KKT residuals of the imported point
    let mut pres: f64 = 0.0;
    for (i, row) in sdp.rows.iter().enumerate() {
        let mut ax = 0.0;
        for (bi, entries) in &row.blocks {
            for &(r, c, v) in entries {
                ax += if r == c { v * x_blocks[*bi][(r, c)] } else { 2.0 * v * x_blocks[*bi][(r, c)] };
            }
        }
        for &(fi, v) in &row.free {
            ax += v * x_free[fi];
        }
        pres = pres.max((sdp.b[i] - ax).abs());
    }
    let mut dres: f64 = 0.0;
    for (bi, block) in sdp.blocks.iter().enumerate() {
        let dim = block.dim();
        let mut r = Array2::<f64>::zeros((dim, dim));
        for &(rr, cc, v) in &sdp.c_blocks[bi] {
            r[(rr, cc)] += v;
            if rr != cc {
                r[(cc, rr)] += v;
            }
        }
        r -= &s_blocks[bi];
        for (i, row) in sdp.rows.iter().enumerate() {
            if let Some((_, entries)) = row.blocks.iter().find(|&&(b, _)| b == bi) {
                for &(rr, cc, v) in entries {
                    r[(rr, cc)] -= y[i] * v;
                    if rr != cc {
                        r[(cc, rr)] -= y[i] * v;
                    }
                }
            }
        }
        dres = dres.max(r.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
    let mut pobj = sdp.obj_const;
    for (bi, entries) in sdp.c_blocks.iter().enumerate() {
        for &(r, c, v) in entries {
            pobj += if r == c { v * x_blocks[bi][(r, c)] } else { 2.0 * v * x_blocks[bi][(r, c)] };
        }
    }
    pobj += sdp.c_free.iter().zip(x_free.iter()).map(|(c, u)| c * u).sum::<f64>();
    let dobj =
        sdp.obj_const + sdp.b.iter().zip(y.iter()).map(|(b, y)| b * y).sum::<f64>();
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
    let status = if pres < 1e-6 && dres < 1e-6 && gap < 1e-6 {
        SdpStatus::Optimal
    } else {
        SdpStatus::MaxIter
    };
    Ok(SdpSolution {
        status,
        x_blocks,
        x_free,
        y,
        s_blocks,
        primal_obj: pobj,
        dual_obj: dobj,
        gap,
        primal_res: pres,
        dual_res: dres,
        iterations: 0,
    })
}
