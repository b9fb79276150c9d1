use super::tape::{AdError, Tape, Var};

/// A value and its derivative with respect to one scalar input, both stored
/// as tape nodes.
///
/// Because the tangent is itself recorded, a reverse sweep from any function
/// of the tangent gives its parameter gradient (reverse-over-forward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: Var,
    pub tangent: Var,
}

impl Dual {
    pub fn new(value: Var, tangent: Var) -> Self {
        Dual { value, tangent }
    }

    /// A constant with the given derivative, e.g. `(t, 1)` for the input itself.
    pub fn constant(tape: &mut Tape, value: f64, tangent: f64) -> Self {
        Dual {
            value: tape.leaf(value),
            tangent: tape.leaf(tangent),
        }
    }

    pub fn values(&self, tape: &Tape) -> (f64, f64) {
        (tape.value(self.value), tape.value(self.tangent))
    }

    pub fn add(self, tape: &mut Tape, o: Dual) -> Dual {
        Dual {
            value: tape.add(self.value, o.value),
            tangent: tape.add(self.tangent, o.tangent),
        }
    }

    pub fn sub(self, tape: &mut Tape, o: Dual) -> Dual {
        Dual {
            value: tape.sub(self.value, o.value),
            tangent: tape.sub(self.tangent, o.tangent),
        }
    }

    pub fn mul(self, tape: &mut Tape, o: Dual) -> Dual {
        let value = tape.mul(self.value, o.value);
        let l = tape.mul(self.tangent, o.value);
        let r = tape.mul(self.value, o.tangent);
        Dual {
            value,
            tangent: tape.add(l, r),
        }
    }

    pub fn div(self, tape: &mut Tape, o: Dual) -> Result<Dual, AdError> {
        let value = tape.div(self.value, o.value)?;
        // (u/v)' = (u' - (u/v) v') / v
        let q = tape.mul(value, o.tangent);
        let num = tape.sub(self.tangent, q);
        Ok(Dual {
            value,
            tangent: tape.div(num, o.value)?,
        })
    }

    pub fn scale(self, tape: &mut Tape, a: f64) -> Dual {
        Dual {
            value: tape.scale(self.value, a),
            tangent: tape.scale(self.tangent, a),
        }
    }

    pub fn affine(self, tape: &mut Tape, a: f64, b: f64) -> Dual {
        Dual {
            value: tape.affine(self.value, a, b),
            tangent: tape.scale(self.tangent, a),
        }
    }

    pub fn tanh(self, tape: &mut Tape) -> Dual {
        let value = tape.tanh(self.value);
        let sq = tape.powi(value, 2);
        let d = tape.affine(sq, -1.0, 1.0);
        Dual {
            value,
            tangent: tape.mul(d, self.tangent),
        }
    }

    pub fn exp(self, tape: &mut Tape) -> Dual {
        let value = tape.exp(self.value);
        Dual {
            value,
            tangent: tape.mul(value, self.tangent),
        }
    }

    pub fn sin(self, tape: &mut Tape) -> Dual {
        let value = tape.sin(self.value);
        let c = tape.cos(self.value);
        Dual {
            value,
            tangent: tape.mul(c, self.tangent),
        }
    }

    pub fn cos(self, tape: &mut Tape) -> Dual {
        let value = tape.cos(self.value);
        let s = tape.sin(self.value);
        let ns = tape.neg(s);
        Dual {
            value,
            tangent: tape.mul(ns, self.tangent),
        }
    }

    pub fn sqrt(self, tape: &mut Tape) -> Result<Dual, AdError> {
        let value = tape.sqrt(self.value)?;
        let two = tape.scale(value, 2.0);
        Ok(Dual {
            value,
            tangent: tape.div(self.tangent, two)?,
        })
    }

    pub fn powi(self, tape: &mut Tape, n: i32) -> Dual {
        let value = tape.powi(self.value, n);
        let lower = tape.powi(self.value, n - 1);
        let d = tape.scale(lower, n as f64);
        Dual {
            value,
            tangent: tape.mul(d, self.tangent),
        }
    }
}
