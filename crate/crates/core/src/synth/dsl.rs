//! A small stack language over integers and integer lists.
//!
//! Inputs are pushed in order (last input on top); the result is the top of
//! the stack after the last instruction. Every instruction has a fixed arity
//! and a static type signature, so well-formedness is decidable before
//! running anything.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::InstructionId;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    List(Vec<i64>),
}

impl Value {
    pub fn ty(&self) -> Ty {
        match self {
            Value::Int(_) => Ty::Int,
            Value::List(_) => Ty::List,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::List(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ty {
    Int,
    List,
}

/// Runtime failure. A program that faults simply fails the test case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Underflow,
    TypeMismatch,
    Overflow,
    EmptyList,
    EmptyStack,
}

macro_rules! ops {
    ($($variant:ident => $name:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Op { $($variant),* }

        impl Op {
            /// Every instruction, most commonly used first.
            pub const ALL: &'static [Op] = &[$(Op::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(Op::$variant => $name),* }
            }
        }

        impl FromStr for Op {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Op::$variant),)*
                    _ => Err(format!("unknown instruction {s:?}")),
                }
            }
        }
    };
}

ops! {
    Dup => "dup",
    Add => "add",
    Push1 => "push1",
    Swap => "swap",
    Head => "head",
    Sum => "sum",
    Length => "length",
    Push0 => "push0",
    Sub => "sub",
    Tail => "tail",
    Inc => "inc",
    Reverse => "reverse",
    Mul => "mul",
    Drop => "drop",
    Push2 => "push2",
    Over => "over",
    Concat => "concat",
    Sort => "sort",
    Cons => "cons",
    Nil => "nil",
    MapInc => "map_inc",
    FilterPos => "filter_pos",
    Dec => "dec",
    Neg => "neg",
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Op {
    pub fn instruction_id(self) -> InstructionId {
        InstructionId::new(self.name()).expect("op names are valid tokens")
    }

    /// Applies the op's type signature to a type stack. Returns `false` (and
    /// leaves the stack in an unspecified state) when ill-typed.
    pub fn apply_type(self, stack: &mut Vec<Ty>) -> bool {
        use Ty::*;
        let need = |stack: &Vec<Ty>, pattern: &[Ty]| {
            stack.len() >= pattern.len() && stack[stack.len() - pattern.len()..] == *pattern
        };
        match self {
            Op::Push0 | Op::Push1 | Op::Push2 => stack.push(Int),
            Op::Nil => stack.push(List),
            Op::Add | Op::Sub | Op::Mul => {
                if !need(stack, &[Int, Int]) {
                    return false;
                }
                stack.pop();
            }
            Op::Inc | Op::Dec | Op::Neg => return need(stack, &[Int]),
            Op::Dup => match stack.last() {
                Some(&t) => stack.push(t),
                None => return false,
            },
            Op::Swap => {
                let n = stack.len();
                if n < 2 {
                    return false;
                }
                stack.swap(n - 1, n - 2);
            }
            Op::Drop => {
                if stack.pop().is_none() {
                    return false;
                }
            }
            Op::Over => {
                let n = stack.len();
                if n < 2 {
                    return false;
                }
                stack.push(stack[n - 2]);
            }
            Op::Reverse | Op::Sort | Op::Tail | Op::MapInc | Op::FilterPos => return need(stack, &[List]),
            Op::Head | Op::Length | Op::Sum => {
                if !need(stack, &[List]) {
                    return false;
                }
                *stack.last_mut().expect("checked") = Int;
            }
            Op::Concat => {
                if !need(stack, &[List, List]) {
                    return false;
                }
                stack.pop();
            }
            Op::Cons => {
                if !need(stack, &[Int, List]) {
                    return false;
                }
                stack.pop();
                *stack.last_mut().expect("checked") = List;
            }
        }
        true
    }

    fn exec(self, stack: &mut Vec<Value>) -> Result<(), Fault> {
        fn pop(stack: &mut Vec<Value>) -> Result<Value, Fault> {
            stack.pop().ok_or(Fault::Underflow)
        }
        fn pop_int(stack: &mut Vec<Value>) -> Result<i64, Fault> {
            match pop(stack)? {
                Value::Int(n) => Ok(n),
                _ => Err(Fault::TypeMismatch),
            }
        }
        fn pop_list(stack: &mut Vec<Value>) -> Result<Vec<i64>, Fault> {
            match pop(stack)? {
                Value::List(v) => Ok(v),
                _ => Err(Fault::TypeMismatch),
            }
        }
        let int_op = |stack: &mut Vec<Value>, f: fn(i64, i64) -> Option<i64>| -> Result<(), Fault> {
            let b = pop_int(stack)?;
            let a = pop_int(stack)?;
            stack.push(Value::Int(f(a, b).ok_or(Fault::Overflow)?));
            Ok(())
        };
        match self {
            Op::Push0 => stack.push(Value::Int(0)),
            Op::Push1 => stack.push(Value::Int(1)),
            Op::Push2 => stack.push(Value::Int(2)),
            Op::Nil => stack.push(Value::List(Vec::new())),
            Op::Add => int_op(stack, i64::checked_add)?,
            Op::Sub => int_op(stack, i64::checked_sub)?,
            Op::Mul => int_op(stack, i64::checked_mul)?,
            Op::Inc | Op::Dec => {
                let a = pop_int(stack)?;
                let r = if self == Op::Inc { a.checked_add(1) } else { a.checked_sub(1) };
                stack.push(Value::Int(r.ok_or(Fault::Overflow)?));
            }
            Op::Neg => {
                let a = pop_int(stack)?;
                stack.push(Value::Int(a.checked_neg().ok_or(Fault::Overflow)?));
            }
            Op::Dup => {
                let top = stack.last().ok_or(Fault::Underflow)?.clone();
                stack.push(top);
            }
            Op::Swap => {
                let n = stack.len();
                if n < 2 {
                    return Err(Fault::Underflow);
                }
                stack.swap(n - 1, n - 2);
            }
            Op::Drop => {
                pop(stack)?;
            }
            Op::Over => {
                let n = stack.len();
                if n < 2 {
                    return Err(Fault::Underflow);
                }
                stack.push(stack[n - 2].clone());
            }
            Op::Reverse => {
                let mut v = pop_list(stack)?;
                v.reverse();
                stack.push(Value::List(v));
            }
            Op::Sort => {
                let mut v = pop_list(stack)?;
                v.sort_unstable();
                stack.push(Value::List(v));
            }
            Op::Tail => {
                let v = pop_list(stack)?;
                if v.is_empty() {
                    return Err(Fault::EmptyList);
                }
                stack.push(Value::List(v[1..].to_vec()));
            }
            Op::Head => {
                let v = pop_list(stack)?;
                stack.push(Value::Int(*v.first().ok_or(Fault::EmptyList)?));
            }
            Op::Length => {
                let v = pop_list(stack)?;
                stack.push(Value::Int(v.len() as i64));
            }
            Op::Sum => {
                let v = pop_list(stack)?;
                let s = v.iter().try_fold(0i64, |a, &x| a.checked_add(x)).ok_or(Fault::Overflow)?;
                stack.push(Value::Int(s));
            }
            Op::MapInc => {
                let v = pop_list(stack)?;
                let v = v.iter().map(|x| x.checked_add(1)).collect::<Option<Vec<_>>>().ok_or(Fault::Overflow)?;
                stack.push(Value::List(v));
            }
            Op::FilterPos => {
                let v = pop_list(stack)?;
                stack.push(Value::List(v.into_iter().filter(|x| *x > 0).collect()));
            }
            Op::Concat => {
                let b = pop_list(stack)?;
                let mut a = pop_list(stack)?;
                a.extend(b);
                stack.push(Value::List(a));
            }
            Op::Cons => {
                let tail = pop_list(stack)?;
                let head = pop_int(stack)?;
                let mut v = Vec::with_capacity(tail.len() + 1);
                v.push(head);
                v.extend(tail);
                stack.push(Value::List(v));
            }
        }
        Ok(())
    }
}

/// An instruction sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DslProgram {
    pub ops: Vec<Op>,
}

impl DslProgram {
    pub fn new(ops: Vec<Op>) -> Self {
        Self { ops }
    }

    pub fn parse<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Result<Self, String> {
        tokens.into_iter().map(str::parse).collect::<Result<Vec<_>, _>>().map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn tokens(&self) -> Vec<String> {
        self.ops.iter().map(|o| o.name().to_string()).collect()
    }

    pub fn instruction_ids(&self) -> Vec<InstructionId> {
        self.ops.iter().map(|o| o.instruction_id()).collect()
    }

    /// Static result type for the given input types, or `None` if the
    /// program is ill-typed or leaves an empty stack.
    pub fn result_type(&self, inputs: &[Ty]) -> Option<Ty> {
        let mut stack = inputs.to_vec();
        for op in &self.ops {
            if !op.apply_type(&mut stack) {
                return None;
            }
        }
        stack.last().copied()
    }
}

impl fmt::Display for DslProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.tokens().join(", "))
    }
}

pub fn evaluate(program: &DslProgram, inputs: &[Value]) -> Result<Value, Fault> {
    let mut stack = inputs.to_vec();
    for op in &program.ops {
        op.exec(&mut stack)?;
    }
    stack.pop().ok_or(Fault::EmptyStack)
}
