use crate::mtheory::{BinOp, Cld, CldSpec, ContextNode, Cpc, Csd, Expr, FormulaCsd, MFrag, MTheory, ParentKind};

/// Up to nine significant digits, trailing zeros trimmed.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.fract() == 0.0 && x.abs() < 1e15 {
        return format!("{}", x as i64);
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let s = format!("{:.*}", (8 - exp).max(0) as usize, x);
        trim_zeros(&s)
    } else {
        format!("{}e{}", trim_zeros(mant), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Number(x) if x.is_sign_negative() && *x != 0.0 => 3,
        _ => 4,
    }
}

pub fn emit_expr(e: &Expr) -> String {
    match e {
        Expr::Number(x) => format_number(*x),
        Expr::Name(n) => n.clone(),
        Expr::Theta(i, j) => format!("theta({i}, {j})"),
        Expr::Cardinality(ov) => format!("CARDINALITY({ov})"),
        Expr::Aggregate(f, p) => format!("{}({p})", f.name()),
        Expr::Normal(m, v) => format!("NormalDist({}, {})", emit_expr(m), emit_expr(v)),
        Expr::Neg(x) => {
            if prec(x) < 3 || matches!(x.as_ref(), Expr::Number(_)) {
                format!("-({})", emit_expr(x))
            } else {
                format!("-{}", emit_expr(x))
            }
        }
        Expr::Binary(op, a, b) => {
            let p = prec(e);
            let left = if prec(a) < p { format!("({})", emit_expr(a)) } else { emit_expr(a) };
            let right = if prec(b) <= p { format!("({})", emit_expr(b)) } else { emit_expr(b) };
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            };
            format!("{left} {sym} {right}")
        }
    }
}

fn emit_csd(csd: &Csd) -> String {
    match csd {
        Csd::Categorical(c) => c
            .entries
            .iter()
            .map(|(s, p)| format!("{s} = {}", format_number(*p)))
            .collect::<Vec<_>>()
            .join(", "),
        Csd::Formula(FormulaCsd::Categorical(e)) => e
            .iter()
            .map(|(s, x)| format!("{s} = {}", emit_expr(x)))
            .collect::<Vec<_>>()
            .join(", "),
        Csd::Formula(FormulaCsd::Continuous(x)) => emit_expr(x),
        Csd::LinearGaussian(l) if l.terms.is_empty() => {
            format!("NormalDist({}, {})", format_number(l.intercept), format_number(l.variance))
        }
        Csd::LinearGaussian(l) => {
            let mut s = format_number(l.intercept);
            for t in &l.terms {
                let sign = if t.coefficient.is_sign_negative() && t.coefficient != 0.0 { "-" } else { "+" };
                let parent = match t.aggregate {
                    Some(f) => format!("{}({})", f.name(), t.parent),
                    None => t.parent.clone(),
                };
                s.push_str(&format!(" {sign} {} * {parent}", format_number(t.coefficient.abs())));
            }
            s.push_str(&format!(" + NormalDist(0, {})", format_number(l.variance)));
            s
        }
    }
}

fn emit_cpc(cpc: &Cpc) -> String {
    let conds = cpc
        .conditions()
        .iter()
        .map(|(p, s)| format!("{p} = {s}"))
        .collect::<Vec<_>>()
        .join(", ");
    format!("some {} have ({conds})", cpc.ovs().join("."))
}

/// Writes a local distribution. Clause bodies are indented by `indent` plus two spaces.
pub fn emit_cld(cld: &Cld, indent: &str) -> String {
    if cld.branches.is_empty() {
        return emit_csd(&cld.default);
    }
    let mut out = String::new();
    for (i, (cpc, csd)) in cld.branches.iter().enumerate() {
        if i == 0 {
            out.push_str(&format!("if {} [\n", emit_cpc(cpc)));
        } else {
            out.push_str(&format!("] else if {} [\n", emit_cpc(cpc)));
        }
        out.push_str(&format!("{indent}  {}\n{indent}", emit_csd(csd)));
    }
    out.push_str(&format!("] else [\n{indent}  {}\n{indent}]", emit_csd(&cld.default)));
    out
}

fn emit_context(c: &ContextNode) -> String {
    match c {
        ContextNode::IsA { ov, entity_type } => format!("IsA ({ov}, {entity_type})"),
        ContextNode::Equality { left, right } => format!("{left} = {right}"),
        ContextNode::Relational { ov, function, args } => format!("{ov} = {function} ({})", args.join(", ")),
        ContextNode::Predicate { function, args } => format!("{function} ({})", args.join(", ")),
    }
}

fn emit_mfrag(f: &MFrag, out: &mut String) {
    if f.contexts.is_empty() && f.residents.is_empty() {
        out.push_str(&format!("[F: {}]\n", f.name));
        return;
    }
    out.push_str(&format!("[F: {}\n", f.name));
    let mut i = 0;
    while i < f.contexts.len() {
        let isa = matches!(f.contexts[i], ContextNode::IsA { .. });
        let mut j = i;
        while j < f.contexts.len() && matches!(f.contexts[j], ContextNode::IsA { .. }) == isa {
            j += 1;
        }
        let group: Vec<String> = f.contexts[i..j].iter().map(emit_context).collect();
        out.push_str(&format!("  [C: {}]\n", group.join(", ")));
        i = j;
    }
    for r in &f.residents {
        let head = format!("  [R: {} ({})", r.name, r.args.join(", "));
        if r.value_space.is_none() && r.parents.is_empty() && r.cld.is_none() {
            out.push_str(&format!("{head}]\n"));
            continue;
        }
        out.push_str(&format!("{head}\n"));
        if let Some(vs) = &r.value_space {
            out.push_str(&format!("    [V: {vs}]\n"));
        }
        for p in &r.parents {
            let tag = match p.kind {
                ParentKind::Input => "IP",
                ParentKind::Resident => "RP",
            };
            out.push_str(&format!("    [{tag}: {} ({})]\n", p.name, p.args.join(", ")));
        }
        match &r.cld {
            Some(CldSpec::Named(n)) => out.push_str(&format!("    [L: {n}]\n")),
            Some(CldSpec::Inline(c)) if c.branches.is_empty() => {
                out.push_str(&format!("    [L: {}]\n", emit_cld(c, "    ")));
            }
            Some(CldSpec::Inline(c)) => {
                out.push_str(&format!("    [L:\n      {}\n    ]\n", emit_cld(c, "      ")));
            }
            None => {}
        }
        out.push_str("  ]\n");
    }
    out.push_str("]\n");
}

/// Writes an MTheory in canonical form: two-space indentation, consecutive IsA nodes
/// grouped in one context block.
pub fn emit_mtheory(m: &MTheory) -> String {
    let mut out = String::new();
    for (i, f) in m.mfrags.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        emit_mfrag(f, &mut out);
    }
    out
}
