//! Machine patterns: parameterized action sequences over arrays of length
//! `n`, their expression language, and instantiation onto concrete machines.
//!
//! A pattern describes one machine with coefficient `(x, n)`: array variables
//! shared by replication, per-machine environment variables, and a fixed
//! action sequence where every array index has the form `x (+) i` (modulo-plus
//! over `n`, written `A[x]` for the machine's own slot and `A[x+i]` for the
//! slot `i` places around the ring).

use crate::text::{lex, Cursor, Token};
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Index of an array variable in its pattern's declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Index of an environment variable in its pattern's declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EnvId(pub usize);

/// Built-in opaque functions available to assignment expressions. The
/// fault-tolerance mechanisms are macro-expanded into plain actions calling
/// these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Builtin {
    /// First voting round: judge each machine faulty iff its copy differs
    /// from the local value. Args: own slot then offsets `1..n-1` of one array.
    Tpa1,
    /// Second voting round: strict-majority vote over exchanged judgment
    /// arrays. Args: own slot then offsets `1..n-1` of one array.
    Tpa2,
    /// Map a final fault-status vector to the responsible machine.
    /// Arg: own slot of the status array.
    Trigger,
    /// Median of the argument values. Args: own slot then offsets `1..n-1`.
    Median,
    /// Opaque task computation under fault abstraction: any erroneous input
    /// makes the output erroneous. Args: arbitrary expressions.
    Task,
    /// Judge each machine faulty iff its liveness beacon differs from the
    /// locally expected beacon. Args: own slot then offsets `1..n-1`.
    LivenessJudge,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        match name {
            "tpa1" => Some(Builtin::Tpa1),
            "tpa2" => Some(Builtin::Tpa2),
            "trigger" => Some(Builtin::Trigger),
            "median" => Some(Builtin::Median),
            "task" => Some(Builtin::Task),
            "liveness_judge" => Some(Builtin::LivenessJudge),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Tpa1 => "tpa1",
            Builtin::Tpa2 => "tpa2",
            Builtin::Trigger => "trigger",
            Builtin::Median => "median",
            Builtin::Task => "task",
            Builtin::LivenessJudge => "liveness_judge",
        }
    }

    /// Builtins whose arguments must be the canonical slot list of a single
    /// array: own slot first, then offsets `1..n-1` in ascending order.
    fn wants_slot_list(&self) -> bool {
        matches!(
            self,
            Builtin::Tpa1 | Builtin::Tpa2 | Builtin::Median | Builtin::LivenessJudge
        )
    }
}

/// Template expression, parameterized by the machine index `x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TExpr {
    Const(Value),
    Env(EnvId),
    /// `A[x + offset]`; offset 0 is the machine's own slot.
    Slot {
        var: VarId,
        offset: usize,
    },
    /// The literal machine index `x` (1-based once instantiated).
    MachineIndex,
    Add(Box<TExpr>, Box<TExpr>),
    Mul(Box<TExpr>, Box<TExpr>),
    Div(Box<TExpr>, Box<TExpr>),
    Neg(Box<TExpr>),
    Call {
        builtin: Builtin,
        args: Vec<TExpr>,
    },
}

/// One action template of the pattern sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionTemplate {
    /// `A[x] <- e`
    Assign { var: VarId, expr: TExpr },
    /// `send(A[x])`
    Send { var: VarId },
    /// `receive(A)`, covering all `n` slots of `A`
    Receive { var: VarId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Assign,
    Send,
    Receive,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::Assign => write!(f, "assign"),
            ActionKind::Send => write!(f, "send"),
            ActionKind::Receive => write!(f, "receive"),
        }
    }
}

impl ActionTemplate {
    pub fn kind(&self) -> ActionKind {
        match self {
            ActionTemplate::Assign { .. } => ActionKind::Assign,
            ActionTemplate::Send { .. } => ActionKind::Send,
            ActionTemplate::Receive { .. } => ActionKind::Receive,
        }
    }

    pub fn var(&self) -> VarId {
        match self {
            ActionTemplate::Assign { var, .. }
            | ActionTemplate::Send { var }
            | ActionTemplate::Receive { var } => *var,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("redundancy count must be at least 1")]
    ZeroRedundancy,
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("malformed pattern: index `{var}[x+{offset}]` resolves outside 1..{n}")]
    IndexOutOfRange {
        var: String,
        offset: usize,
        n: usize,
    },
    #[error("tuple literals must have constant elements")]
    NonConstTuple,
    #[error("builtin `{builtin}` expects {expected}, got {got}")]
    BadBuiltinArgs {
        builtin: &'static str,
        expected: String,
        got: String,
    },
    #[error("`median` needs an odd number of values; n = {0} is even")]
    EvenMedian(usize),
}

/// The pattern of a machine with coefficient `(x, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub arrays: Vec<String>,
    pub env_vars: Vec<String>,
    pub actions: Vec<ActionTemplate>,
    pub n: usize,
}

impl Pattern {
    pub fn new(
        n: usize,
        arrays: Vec<String>,
        env_vars: Vec<String>,
    ) -> Result<Pattern, PatternError> {
        if n == 0 {
            return Err(PatternError::ZeroRedundancy);
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in arrays.iter().chain(env_vars.iter()) {
            if !seen.insert(name.clone()) {
                return Err(PatternError::DuplicateName(name.clone()));
            }
        }
        Ok(Pattern {
            arrays,
            env_vars,
            actions: Vec::new(),
            n,
        })
    }

    pub fn k(&self) -> usize {
        self.actions.len()
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.arrays.iter().position(|a| a == name).map(VarId)
    }

    pub fn env_id(&self, name: &str) -> Option<EnvId> {
        self.env_vars.iter().position(|a| a == name).map(EnvId)
    }

    pub fn var_name(&self, id: VarId) -> &str {
        &self.arrays[id.0]
    }

    pub fn env_name(&self, id: EnvId) -> &str {
        &self.env_vars[id.0]
    }

    /// Parses and appends one action.
    pub fn push_action(&mut self, text: &str) -> Result<(), PatternError> {
        let action = self.parse_action(text)?;
        self.actions.push(action);
        Ok(())
    }

    pub fn parse_action(&self, text: &str) -> Result<ActionTemplate, PatternError> {
        let tokens = lex(text).map_err(|e| PatternError::Syntax {
            pos: e.pos,
            msg: e.msg,
        })?;
        let mut cur = Cursor::new(&tokens, text.len());
        let action = self.action_from_cursor(&mut cur)?;
        if !cur.at_end() {
            return Err(PatternError::Syntax {
                pos: cur.pos(),
                msg: "trailing input after action".to_string(),
            });
        }
        Ok(action)
    }

    fn action_from_cursor(&self, cur: &mut Cursor) -> Result<ActionTemplate, PatternError> {
        let head = match cur.peek() {
            Some(Token::Ident(name)) => name.clone(),
            _ => {
                return Err(PatternError::Syntax {
                    pos: cur.pos(),
                    msg: "expected action".to_string(),
                })
            }
        };
        match head.as_str() {
            "send" => {
                cur.bump();
                self.expect(cur, &Token::LParen)?;
                let var = self.expect_array(cur)?;
                self.expect(cur, &Token::LBracket)?;
                self.expect_machine_index(cur)?;
                self.expect(cur, &Token::RBracket)?;
                self.expect(cur, &Token::RParen)?;
                Ok(ActionTemplate::Send { var })
            }
            "receive" => {
                cur.bump();
                self.expect(cur, &Token::LParen)?;
                let var = self.expect_array(cur)?;
                self.expect(cur, &Token::RParen)?;
                Ok(ActionTemplate::Receive { var })
            }
            _ => {
                let var = self.expect_array(cur)?;
                self.expect(cur, &Token::LBracket)?;
                self.expect_machine_index(cur)?;
                self.expect(cur, &Token::RBracket)?;
                self.expect(cur, &Token::Assign)?;
                let expr = self.expr_from_cursor(cur)?;
                Ok(ActionTemplate::Assign { var, expr })
            }
        }
    }

    pub fn parse_expr(&self, text: &str) -> Result<TExpr, PatternError> {
        let tokens = lex(text).map_err(|e| PatternError::Syntax {
            pos: e.pos,
            msg: e.msg,
        })?;
        let mut cur = Cursor::new(&tokens, text.len());
        let expr = self.expr_from_cursor(&mut cur)?;
        if !cur.at_end() {
            return Err(PatternError::Syntax {
                pos: cur.pos(),
                msg: "trailing input after expression".to_string(),
            });
        }
        Ok(expr)
    }

    fn expr_from_cursor(&self, cur: &mut Cursor) -> Result<TExpr, PatternError> {
        let mut lhs = self.term(cur)?;
        while cur.eat(&Token::Plus) {
            let rhs = self.term(cur)?;
            lhs = TExpr::Add(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&self, cur: &mut Cursor) -> Result<TExpr, PatternError> {
        let mut lhs = self.factor(cur)?;
        loop {
            if cur.eat(&Token::Star) {
                let rhs = self.factor(cur)?;
                lhs = TExpr::Mul(Box::new(lhs), Box::new(rhs));
            } else if cur.eat(&Token::Slash) {
                let rhs = self.factor(cur)?;
                lhs = TExpr::Div(Box::new(lhs), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn factor(&self, cur: &mut Cursor) -> Result<TExpr, PatternError> {
        if cur.eat(&Token::Minus) {
            let inner = self.factor(cur)?;
            return Ok(TExpr::Neg(Box::new(inner)));
        }
        self.primary(cur)
    }

    fn primary(&self, cur: &mut Cursor) -> Result<TExpr, PatternError> {
        let pos = cur.pos();
        match cur.bump() {
            Some(Token::Int(v)) => Ok(TExpr::Const(Value::Int(v))),
            Some(Token::LParen) => {
                let first = self.expr_from_cursor(cur)?;
                if cur.eat(&Token::Comma) {
                    // tuple literal; elements must fold to constants
                    let mut items = vec![const_fold(&first)?];
                    loop {
                        let item = self.expr_from_cursor(cur)?;
                        items.push(const_fold(&item)?);
                        if !cur.eat(&Token::Comma) {
                            break;
                        }
                    }
                    self.expect(cur, &Token::RParen)?;
                    Ok(TExpr::Const(Value::Tuple(items)))
                } else {
                    self.expect(cur, &Token::RParen)?;
                    Ok(first)
                }
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(TExpr::MachineIndex),
                "Correct" => Ok(TExpr::Const(Value::Correct)),
                "Erroneous" => Ok(TExpr::Const(Value::Erroneous)),
                _ => {
                    if cur.peek() == Some(&Token::LParen) {
                        let builtin =
                            Builtin::from_name(&name).ok_or(PatternError::UnknownFunction(name))?;
                        cur.bump();
                        let mut args = Vec::new();
                        if !cur.eat(&Token::RParen) {
                            loop {
                                args.push(self.expr_from_cursor(cur)?);
                                if !cur.eat(&Token::Comma) {
                                    break;
                                }
                            }
                            self.expect(cur, &Token::RParen)?;
                        }
                        Ok(TExpr::Call { builtin, args })
                    } else if let Some(var) = self.var_id(&name) {
                        self.expect(cur, &Token::LBracket)?;
                        let offset = self.slot_offset(cur)?;
                        self.expect(cur, &Token::RBracket)?;
                        Ok(TExpr::Slot { var, offset })
                    } else if let Some(env) = self.env_id(&name) {
                        Ok(TExpr::Env(env))
                    } else {
                        Err(PatternError::UnknownVariable(name))
                    }
                }
            },
            _ => Err(PatternError::Syntax {
                pos,
                msg: "expected expression".to_string(),
            }),
        }
    }

    /// Parses `x` or `x + i` inside brackets into an offset.
    fn slot_offset(&self, cur: &mut Cursor) -> Result<usize, PatternError> {
        self.expect_machine_index(cur)?;
        if cur.eat(&Token::Plus) {
            let pos = cur.pos();
            match cur.bump() {
                Some(Token::Int(v)) if v >= 0 => Ok(v as usize),
                _ => Err(PatternError::Syntax {
                    pos,
                    msg: "expected nonnegative offset after `x +`".to_string(),
                }),
            }
        } else {
            Ok(0)
        }
    }

    fn expect(&self, cur: &mut Cursor, token: &Token) -> Result<(), PatternError> {
        let pos = cur.pos();
        if cur.eat(token) {
            Ok(())
        } else {
            Err(PatternError::Syntax {
                pos,
                msg: format!("expected `{token}`"),
            })
        }
    }

    fn expect_machine_index(&self, cur: &mut Cursor) -> Result<(), PatternError> {
        let pos = cur.pos();
        match cur.bump() {
            Some(Token::Ident(name)) if name == "x" => Ok(()),
            _ => Err(PatternError::Syntax {
                pos,
                msg: "expected machine index `x`".to_string(),
            }),
        }
    }

    fn expect_array(&self, cur: &mut Cursor) -> Result<VarId, PatternError> {
        let pos = cur.pos();
        match cur.bump() {
            Some(Token::Ident(name)) => self
                .var_id(&name)
                .ok_or(PatternError::UnknownVariable(name)),
            _ => Err(PatternError::Syntax {
                pos,
                msg: "expected array name".to_string(),
            }),
        }
    }

    /// Renders a template action back to its surface syntax.
    pub fn render_template(&self, action: &ActionTemplate) -> String {
        match action {
            ActionTemplate::Assign { var, expr } => {
                format!("{}[x] <- {}", self.var_name(*var), self.render_texpr(expr))
            }
            ActionTemplate::Send { var } => format!("send({}[x])", self.var_name(*var)),
            ActionTemplate::Receive { var } => format!("receive({})", self.var_name(*var)),
        }
    }

    pub fn render_texpr(&self, expr: &TExpr) -> String {
        match expr {
            TExpr::Const(v) => v.to_string(),
            TExpr::Env(id) => self.env_name(*id).to_string(),
            TExpr::Slot { var, offset: 0 } => format!("{}[x]", self.var_name(*var)),
            TExpr::Slot { var, offset } => format!("{}[x+{}]", self.var_name(*var), offset),
            TExpr::MachineIndex => "x".to_string(),
            TExpr::Add(a, b) => format!("({} + {})", self.render_texpr(a), self.render_texpr(b)),
            TExpr::Mul(a, b) => format!("({} * {})", self.render_texpr(a), self.render_texpr(b)),
            TExpr::Div(a, b) => format!("({} / {})", self.render_texpr(a), self.render_texpr(b)),
            TExpr::Neg(a) => format!("-({})", self.render_texpr(a)),
            TExpr::Call { builtin, args } => {
                let args: Vec<_> = args.iter().map(|a| self.render_texpr(a)).collect();
                format!("{}({})", builtin.name(), args.join(", "))
            }
        }
    }
}

fn const_fold(expr: &TExpr) -> Result<Value, PatternError> {
    match expr {
        TExpr::Const(v) => Ok(v.clone()),
        TExpr::Neg(inner) => Ok(const_fold(inner)?.neg()),
        _ => Err(PatternError::NonConstTuple),
    }
}

/// Instantiated expression: all ring arithmetic resolved to absolute slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CExpr {
    Const(Value),
    Env(EnvId),
    Slot { var: VarId, slot: usize },
    Add(Box<CExpr>, Box<CExpr>),
    Mul(Box<CExpr>, Box<CExpr>),
    Div(Box<CExpr>, Box<CExpr>),
    Neg(Box<CExpr>),
    Call { builtin: Builtin, args: Vec<CExpr> },
}

/// Concrete per-machine action. The executing machine is implicit: assigns
/// and sends target that machine's own slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Assign { var: VarId, expr: CExpr },
    Send { var: VarId },
    Receive { var: VarId },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Assign { .. } => ActionKind::Assign,
            Action::Send { .. } => ActionKind::Send,
            Action::Receive { .. } => ActionKind::Receive,
        }
    }

    pub fn var(&self) -> VarId {
        match self {
            Action::Assign { var, .. } | Action::Send { var } | Action::Receive { var } => *var,
        }
    }
}

/// Resolves the pattern onto machines `1..=n`: machine `x`'s sequence is the
/// template with all `x (+) i` arithmetic resolved modulo `n`.
pub fn instantiate(pattern: &Pattern) -> Result<Vec<Vec<Action>>, PatternError> {
    if pattern.n == 0 {
        return Err(PatternError::ZeroRedundancy);
    }
    validate_builtin_shapes(pattern)?;
    let mut machines = Vec::with_capacity(pattern.n);
    for x in 0..pattern.n {
        let mut seq = Vec::with_capacity(pattern.actions.len());
        for template in &pattern.actions {
            let action = match template {
                ActionTemplate::Assign { var, expr } => Action::Assign {
                    var: *var,
                    expr: resolve_expr(pattern, expr, x)?,
                },
                ActionTemplate::Send { var } => Action::Send { var: *var },
                ActionTemplate::Receive { var } => Action::Receive { var: *var },
            };
            seq.push(action);
        }
        machines.push(seq);
    }
    Ok(machines)
}

fn resolve_expr(pattern: &Pattern, expr: &TExpr, machine: usize) -> Result<CExpr, PatternError> {
    let n = pattern.n;
    Ok(match expr {
        TExpr::Const(v) => CExpr::Const(v.clone()),
        TExpr::Env(id) => CExpr::Env(*id),
        TExpr::Slot { var, offset } => {
            if *offset >= n {
                return Err(PatternError::IndexOutOfRange {
                    var: pattern.var_name(*var).to_string(),
                    offset: *offset,
                    n,
                });
            }
            CExpr::Slot {
                var: *var,
                slot: (machine + offset) % n,
            }
        }
        TExpr::MachineIndex => CExpr::Const(Value::Int(machine as i64 + 1)),
        TExpr::Add(a, b) => CExpr::Add(
            Box::new(resolve_expr(pattern, a, machine)?),
            Box::new(resolve_expr(pattern, b, machine)?),
        ),
        TExpr::Mul(a, b) => CExpr::Mul(
            Box::new(resolve_expr(pattern, a, machine)?),
            Box::new(resolve_expr(pattern, b, machine)?),
        ),
        TExpr::Div(a, b) => CExpr::Div(
            Box::new(resolve_expr(pattern, a, machine)?),
            Box::new(resolve_expr(pattern, b, machine)?),
        ),
        TExpr::Neg(a) => CExpr::Neg(Box::new(resolve_expr(pattern, a, machine)?)),
        TExpr::Call { builtin, args } => CExpr::Call {
            builtin: *builtin,
            args: args
                .iter()
                .map(|a| resolve_expr(pattern, a, machine))
                .collect::<Result<_, _>>()?,
        },
    })
}

/// Builtins with slot-list conventions must receive the canonical slot list
/// of a single array (own slot, then offsets ascending); `trigger` takes the
/// own slot of its status array.
fn validate_builtin_shapes(pattern: &Pattern) -> Result<(), PatternError> {
    fn walk(pattern: &Pattern, expr: &TExpr) -> Result<(), PatternError> {
        match expr {
            TExpr::Call { builtin, args } => {
                for arg in args {
                    walk(pattern, arg)?;
                }
                if builtin.wants_slot_list() {
                    let ok = args.len() == pattern.n
                        && args.iter().enumerate().all(|(i, a)| {
                            matches!(a, TExpr::Slot { var, offset }
                                     if *offset == i && *var == args_var(args))
                        });
                    if !ok {
                        return Err(PatternError::BadBuiltinArgs {
                            builtin: builtin.name(),
                            expected: format!(
                                "the canonical slot list A[x], A[x+1], .., A[x+{}] of one array",
                                pattern.n - 1
                            ),
                            got: pattern.render_texpr(expr),
                        });
                    }
                    if *builtin == Builtin::Median && pattern.n.is_multiple_of(2) {
                        return Err(PatternError::EvenMedian(pattern.n));
                    }
                }
                if *builtin == Builtin::Trigger {
                    let ok = args.len() == 1 && matches!(args[0], TExpr::Slot { offset: 0, .. });
                    if !ok {
                        return Err(PatternError::BadBuiltinArgs {
                            builtin: builtin.name(),
                            expected: "the own slot of the status array".to_string(),
                            got: pattern.render_texpr(expr),
                        });
                    }
                }
                if *builtin == Builtin::Task && args.is_empty() {
                    return Err(PatternError::BadBuiltinArgs {
                        builtin: builtin.name(),
                        expected: "at least one input".to_string(),
                        got: "()".to_string(),
                    });
                }
                Ok(())
            }
            TExpr::Add(a, b) | TExpr::Mul(a, b) | TExpr::Div(a, b) => {
                walk(pattern, a)?;
                walk(pattern, b)
            }
            TExpr::Neg(a) => walk(pattern, a),
            _ => Ok(()),
        }
    }
    fn args_var(args: &[TExpr]) -> VarId {
        match &args[0] {
            TExpr::Slot { var, .. } => *var,
            _ => VarId(usize::MAX),
        }
    }
    for action in &pattern.actions {
        if let ActionTemplate::Assign { expr, .. } = action {
            walk(pattern, expr)?;
        }
    }
    Ok(())
}

/// Renders a concrete action for machine `machine` (0-based) the way the
/// instantiation is usually written out: receives list absolute slots in
/// ring order.
pub fn render_action(pattern: &Pattern, machine: usize, action: &Action) -> String {
    let n = pattern.n;
    match action {
        Action::Assign { var, expr } => format!(
            "{}[{}] <- {}",
            pattern.var_name(*var),
            machine + 1,
            render_cexpr(pattern, expr)
        ),
        Action::Send { var } => format!("send({}[{}])", pattern.var_name(*var), machine + 1),
        Action::Receive { var } => {
            let slots: Vec<String> = (1..=n)
                .map(|i| format!("{}[{}]", pattern.var_name(*var), (machine + i) % n + 1))
                .collect();
            format!("receive({})", slots.join(","))
        }
    }
}

pub fn render_cexpr(pattern: &Pattern, expr: &CExpr) -> String {
    match expr {
        CExpr::Const(v) => v.to_string(),
        CExpr::Env(id) => pattern.env_name(*id).to_string(),
        CExpr::Slot { var, slot } => format!("{}[{}]", pattern.var_name(*var), slot + 1),
        CExpr::Add(a, b) => format!(
            "({} + {})",
            render_cexpr(pattern, a),
            render_cexpr(pattern, b)
        ),
        CExpr::Mul(a, b) => format!(
            "({} * {})",
            render_cexpr(pattern, a),
            render_cexpr(pattern, b)
        ),
        CExpr::Div(a, b) => format!(
            "({} / {})",
            render_cexpr(pattern, a),
            render_cexpr(pattern, b)
        ),
        CExpr::Neg(a) => format!("-({})", render_cexpr(pattern, a)),
        CExpr::Call { builtin, args } => {
            let args: Vec<_> = args.iter().map(|a| render_cexpr(pattern, a)).collect();
            format!("{}({})", builtin.name(), args.join(", "))
        }
    }
}
