//! Text serialization for polynomials: one line per term,
//! `coeff e0 e1 ... ek` with the exponent vector in variable order.

use std::sync::Arc;

use super::{Monomial, Polynomial, VarSpace};

/// Serialize to one `coeff e0 e1 ... ek` line per term, graded-lex order.
pub fn poly_lines(p: &Polynomial) -> Vec<String> {
    let dim = p.space().dim();
    p.terms()
        .map(|(m, c)| {
            let exps = m.exponents(dim);
            let mut line = format!("{c}");
            for e in exps {
                line.push(' ');
                line.push_str(&e.to_string());
            }
            line
        })
        .collect()
}

/// Parse lines produced by [`poly_lines`] back into a polynomial over `space`.
pub fn parse_poly_lines(
    space: &Arc<VarSpace>,
    lines: &[String],
) -> Result<Polynomial, String> {
    let mut p = Polynomial::zero(space);
    for (ln, line) in lines.iter().enumerate() {
        let mut it = line.split_whitespace();
        let coeff: f64 = it
            .next()
            .ok_or_else(|| format!("line {}: empty", ln + 1))?
            .parse()
            .map_err(|e| format!("line {}: bad coefficient: {e}", ln + 1))?;
        let exps: Vec<u16> = it
            .map(|t| t.parse::<u16>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: bad exponent: {e}", ln + 1))?;
        if exps.len() != space.dim() {
            return Err(format!(
                "line {}: expected {} exponents, got {}",
                ln + 1,
                space.dim(),
                exps.len()
            ));
        }
        p.add_term(Monomial::from_exponents(&exps), coeff);
    }
    Ok(p)
}
