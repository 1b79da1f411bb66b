//! Text grammar for copula models, shared by the CLI and study files.
//!
//! ```text
//! model   := family "(" [arg ("," arg)*] ")"
//!          | "ordinal" "(" block (";" block)* ")"
//! block   := "[" number "," number "]" ":" model
//! arg     := key "=" number
//! number  := decimal ["/" decimal]          e.g. 0.5, -2/3, 1e-3
//! ```
//!
//! Families and keys:
//!
//! | family                          | keys                                             |
//! |---------------------------------|--------------------------------------------------|
//! | `indep`, `independence`         | none                                             |
//! | `m`, `frechet_m`, `comonotone`  | none                                             |
//! | `clayton`                       | `theta` or `tau`                                 |
//! | `gumbel`                        | `theta` or `tau`                                 |
//! | `t`                             | `rho` or `tau`; `df` (default 1)                 |
//! | `aneglog`                       | `theta` or `lambdaU`; `psi1` (default 2/3), `psi2` (default 1) |
//!
//! Whitespace is allowed between tokens.

use crate::error::{Error, Result};
use crate::models::{param_from_lambda_u, param_from_tau, Block, CopulaModel, Family};

/// Parses a model specification.
pub fn parse_model(src: &str) -> Result<CopulaModel> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    p.skip_ws();
    let m = p.model()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(m)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

struct Arg {
    key: String,
    value: f64,
    offset: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", c as char)))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err(self.error("expected an identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn decimal(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.peek(), Some(b'+' | b'-')) {
            self.pos += 1;
        }
        while let Some(c) = self.peek() {
            let exp_sign = matches!(c, b'+' | b'-') && matches!(self.src.get(self.pos - 1), Some(b'e' | b'E'));
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map_err(|_| Error::Parse { offset: start, message: "expected a number".into() })
    }

    fn number(&mut self) -> Result<f64> {
        let num = self.decimal()?;
        self.skip_ws();
        if self.peek() == Some(b'/') {
            self.pos += 1;
            let start = self.pos;
            let den = self.decimal()?;
            if den == 0.0 {
                return Err(Error::Parse { offset: start, message: "division by zero".into() });
            }
            return Ok(num / den);
        }
        Ok(num)
    }

    fn args(&mut self) -> Result<Vec<Arg>> {
        let mut out = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b')') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            self.skip_ws();
            let offset = self.pos;
            let key = self.ident()?;
            self.expect(b'=')?;
            let value = self.number()?;
            if out.iter().any(|a: &Arg| a.key == key) {
                return Err(Error::Parse { offset, message: format!("duplicate key '{key}'") });
            }
            out.push(Arg { key, value, offset });
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.error("expected ',' or ')'")),
            }
        }
    }

    fn model(&mut self) -> Result<CopulaModel> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident()?.to_ascii_lowercase();
        self.expect(b'(')?;
        if name == "ordinal" {
            return self.ordinal_blocks(start);
        }
        let args = self.args()?;
        build_family(&name, &args, start)
    }

    fn ordinal_blocks(&mut self, start: usize) -> Result<CopulaModel> {
        let mut blocks = Vec::new();
        loop {
            self.expect(b'[')?;
            let lo = self.number()?;
            self.expect(b',')?;
            let hi = self.number()?;
            self.expect(b']')?;
            self.expect(b':')?;
            let component = self.model()?;
            blocks.push(Block { lo, hi, component });
            self.skip_ws();
            match self.peek() {
                Some(b';') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                _ => return Err(self.error("expected ';' or ')'")),
            }
        }
        CopulaModel::ordinal_sum(blocks).map_err(|e| at(start, e))
    }
}

fn at(offset: usize, e: Error) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => Error::Parse { offset, message: other.to_string() },
    }
}

fn build_family(name: &str, args: &[Arg], start: usize) -> Result<CopulaModel> {
    let allowed: &[&str] = match name {
        "indep" | "independence" | "m" | "frechet_m" | "comonotone" => &[],
        "clayton" | "gumbel" => &["theta", "tau"],
        "t" => &["rho", "tau", "df"],
        "aneglog" => &["theta", "lambdau", "psi1", "psi2"],
        _ => {
            return Err(Error::Parse { offset: start, message: format!("unknown copula family '{name}'") });
        }
    };
    for a in args {
        if !allowed.contains(&a.key.to_ascii_lowercase().as_str()) {
            return Err(Error::Parse { offset: a.offset, message: format!("unknown key '{}' for {name}", a.key) });
        }
    }
    let get = |k: &str| args.iter().find(|a| a.key.eq_ignore_ascii_case(k)).map(|a| a.value);
    let one_of = |a: &str, b: &str| -> Result<(Option<f64>, Option<f64>)> {
        match (get(a), get(b)) {
            (Some(_), Some(_)) => Err(Error::Parse { offset: start, message: format!("{name}: give either {a} or {b}, not both") }),
            (None, None) => Err(Error::Parse { offset: start, message: format!("{name}: missing {a} or {b}") }),
            pair => Ok(pair),
        }
    };
    let model = match name {
        "indep" | "independence" => Ok(CopulaModel::Independence),
        "m" | "frechet_m" | "comonotone" => Ok(CopulaModel::FrechetM),
        "clayton" => match one_of("theta", "tau")? {
            (Some(theta), _) => CopulaModel::clayton(theta),
            (_, Some(tau)) => param_from_tau(Family::Clayton, tau),
            _ => unreachable!(),
        },
        "gumbel" => match one_of("theta", "tau")? {
            (Some(theta), _) => CopulaModel::gumbel(theta),
            (_, Some(tau)) => param_from_tau(Family::Gumbel, tau),
            _ => unreachable!(),
        },
        "t" => {
            let df = get("df").unwrap_or(1.0);
            if df < 1.0 || df.fract() != 0.0 || df > f64::from(u32::MAX) {
                return Err(Error::Parse { offset: start, message: format!("t: df must be a positive integer, got {df}") });
            }
            let df = df as u32;
            match one_of("rho", "tau")? {
                (Some(rho), _) => CopulaModel::student_t(rho, df),
                (_, Some(tau)) => param_from_tau(Family::StudentT { df }, tau),
                _ => unreachable!(),
            }
        }
        "aneglog" => {
            let psi1 = get("psi1").unwrap_or(2.0 / 3.0);
            let psi2 = get("psi2").unwrap_or(1.0);
            match one_of("theta", "lambdaU")? {
                (Some(theta), _) => CopulaModel::asym_neg_logistic(theta, psi1, psi2),
                (_, Some(l)) => param_from_lambda_u(psi1, psi2, l),
                _ => unreachable!(),
            }
        }
        _ => unreachable!(),
    };
    model.map_err(|e| at(start, e))
}
