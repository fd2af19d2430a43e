use super::{Evolve, Expr, GlobalDecl, IrError, Program, Stmt, VarSort};
use std::collections::BTreeSet;

fn collect_names(stmts: &[Stmt], out: &mut BTreeSet<String>) {
    for s in stmts {
        match s {
            Stmt::Assign { var, .. } | Stmt::Havoc(var) | Stmt::Choose { var, .. } => {
                out.insert(var.clone());
            }
            Stmt::If {
                then_block,
                else_block,
                ..
            } => {
                collect_names(then_block, out);
                collect_names(else_block, out);
            }
            Stmt::Seq(b) => collect_names(b, out),
            Stmt::For { index, body, .. } => {
                out.insert(index.clone());
                collect_names(body, out);
            }
            _ => {}
        }
    }
}

struct Lowering {
    taken: BTreeSet<String>,
    new_globals: Vec<GlobalDecl>,
}

impl Lowering {
    fn fresh(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut k = 1;
        while self.taken.contains(&name) {
            name = format!("{base}{k}");
            k += 1;
        }
        self.taken.insert(name.clone());
        name
    }

    fn block(&mut self, stmts: &[Stmt], declared: &BTreeSet<String>) -> Result<Vec<Stmt>, IrError> {
        let mut out = Vec::with_capacity(stmts.len());
        for s in stmts {
            match s {
                Stmt::Evolve(ev) => out.extend(self.evolve(ev, declared)?),
                Stmt::If {
                    cond,
                    then_block,
                    else_block,
                } => out.push(Stmt::If {
                    cond: cond.clone(),
                    then_block: self.block(then_block, declared)?,
                    else_block: self.block(else_block, declared)?,
                }),
                Stmt::Seq(b) => out.push(Stmt::Seq(self.block(b, declared)?)),
                Stmt::For { index, count, body } => {
                    let mut inner = declared.clone();
                    inner.insert(index.clone());
                    out.push(Stmt::For {
                        index: index.clone(),
                        count: count.clone(),
                        body: self.block(body, &inner)?,
                    });
                }
                other => out.push(other.clone()),
            }
        }
        Ok(out)
    }

    /// `m = choose(steps); for j in 0..m { t = t + dt; v = v + rhs * dt; ... }`
    fn evolve(&mut self, ev: &Evolve, declared: &BTreeSet<String>) -> Result<Vec<Stmt>, IrError> {
        if !declared.contains(&ev.dt) {
            return Err(IrError::EvolveUndeclared {
                role: "time step",
                name: ev.dt.clone(),
            });
        }
        let mut missing = None;
        ev.max_steps.for_each_var(&mut |v| {
            if missing.is_none() && !declared.contains(v) {
                missing = Some(v.clone());
            }
        });
        if let Some(name) = missing {
            return Err(IrError::EvolveUndeclared {
                role: "step bound",
                name,
            });
        }

        let steps = self.fresh("m");
        let index = self.fresh("j");
        self.new_globals.push(GlobalDecl {
            name: steps.clone(),
            sort: VarSort::Int,
            init: None,
        });

        let dt = || Expr::var(ev.dt.clone());
        let mut body = Vec::new();
        if let Some(t) = &ev.time {
            body.push(Stmt::assign(t.clone(), Expr::var(t.clone()) + dt()));
        }
        if let [(v, rhs)] = ev.odes.as_slice() {
            body.push(Stmt::assign(v.clone(), Expr::var(v.clone()) + rhs.clone() * dt()));
        } else {
            // every right-hand side reads the pre-step state
            let mut temps = Vec::new();
            for (v, rhs) in &ev.odes {
                let tmp = self.fresh(&format!("{v}_next"));
                self.new_globals.push(GlobalDecl {
                    name: tmp.clone(),
                    sort: VarSort::Real,
                    init: None,
                });
                body.push(Stmt::assign(tmp.clone(), Expr::var(v.clone()) + rhs.clone() * dt()));
                temps.push((v.clone(), tmp));
            }
            for (v, tmp) in temps {
                body.push(Stmt::assign(v, Expr::var(tmp)));
            }
        }
        Ok(vec![
            Stmt::Choose {
                var: steps.clone(),
                bound: ev.max_steps.clone(),
            },
            Stmt::For {
                index,
                count: Expr::var(steps),
                body,
            },
        ])
    }
}

/// Replaces every Evolve block with its first-order (explicit Euler)
/// discretization over a nondeterministic number of steps.
pub fn lower_evolve(p: &Program) -> Result<Program, IrError> {
    if !p.has_evolve() {
        return Ok(p.clone());
    }
    let mut taken: BTreeSet<String> = p.declared().map(str::to_string).collect();
    taken.extend(p.functions.iter().map(|f| f.name.clone()));
    collect_names(&p.main, &mut taken);
    for f in &p.functions {
        collect_names(&f.body, &mut taken);
    }
    let declared: BTreeSet<String> = p.declared().map(str::to_string).collect();
    let mut lowering = Lowering {
        taken,
        new_globals: Vec::new(),
    };
    let mut out = p.clone();
    for f in &mut out.functions {
        f.body = lowering.block(&f.body, &declared)?;
    }
    out.main = lowering.block(&p.main, &declared)?;
    out.globals.extend(lowering.new_globals);
    Ok(out)
}

/// Replaces each `call f;` by the (recursively inlined) body of `f`.
pub fn inline_calls(p: &Program) -> Result<Program, IrError> {
    fn inline(p: &Program, stmts: &[Stmt], depth: usize) -> Result<Vec<Stmt>, IrError> {
        if depth > p.functions.len() + 1 {
            return Err(IrError::RecursiveCall(Vec::new()));
        }
        stmts
            .iter()
            .map(|s| {
                Ok(match s {
                    Stmt::Call(name) => {
                        let f = p
                            .function(name)
                            .ok_or_else(|| IrError::UnknownFunction(name.clone()))?;
                        Stmt::Seq(inline(p, &f.body, depth + 1)?)
                    }
                    Stmt::If {
                        cond,
                        then_block,
                        else_block,
                    } => Stmt::If {
                        cond: cond.clone(),
                        then_block: inline(p, then_block, depth)?,
                        else_block: inline(p, else_block, depth)?,
                    },
                    Stmt::Seq(b) => Stmt::Seq(inline(p, b, depth)?),
                    Stmt::For { index, count, body } => Stmt::For {
                        index: index.clone(),
                        count: count.clone(),
                        body: inline(p, body, depth)?,
                    },
                    other => other.clone(),
                })
            })
            .collect()
    }
    let mut out = p.clone();
    out.main = inline(p, &p.main, 0)?;
    Ok(out)
}

/// Full lowering used before exploration: Evolve blocks, then calls.
pub fn lower(p: &Program) -> Result<Program, IrError> {
    inline_calls(&lower_evolve(p)?)
}
