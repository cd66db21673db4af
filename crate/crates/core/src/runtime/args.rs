//! Textual transaction arguments: `uint:5`, `int:-3`, `id:alice`,
//! `val:Module.name`, `unit`, and type arguments such as `MyToken` or
//! `Token.Token[MyToken]`.

use std::fmt;

use crate::registry::Registry;
use crate::types::{CapSet, ModuleId, SemType, TypeKind, TypeRef};

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Arg {
    UInt(u64),
    Int(i64),
    Id(String),
    Val { module: String, name: String },
    Unit,
}

impl Arg {
    pub fn parse(s: &str) -> Result<Arg, String> {
        if s == "unit" {
            return Ok(Arg::Unit);
        }
        let (tag, rest) = s.split_once(':').ok_or_else(|| format!("argument `{s}` has no type tag"))?;
        match tag {
            "uint" => rest.parse().map(Arg::UInt).map_err(|e| format!("`{s}`: {e}")),
            "int" => rest.parse().map(Arg::Int).map_err(|e| format!("`{s}`: {e}")),
            "id" if !rest.is_empty() => Ok(Arg::Id(rest.to_string())),
            "val" => match rest.split_once('.') {
                Some((m, n)) if !m.is_empty() && !n.is_empty() => Ok(Arg::Val { module: m.into(), name: n.into() }),
                _ => Err(format!("`{s}`: expected val:<module>.<name>")),
            },
            _ => Err(format!("argument `{s}` has an unknown type tag")),
        }
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::UInt(n) => write!(f, "uint:{n}"),
            Arg::Int(n) => write!(f, "int:{n}"),
            Arg::Id(s) => write!(f, "id:{s}"),
            Arg::Val { module, name } => write!(f, "val:{module}.{name}"),
            Arg::Unit => f.write_str("unit"),
        }
    }
}

/// Parse a comma-separated list of type arguments, with or without the
/// surrounding brackets.
pub fn parse_type_list(s: &str, registry: &dyn Registry) -> Result<Vec<SemType>, String> {
    let s = s.trim();
    let s = s.strip_prefix('[').and_then(|x| x.strip_suffix(']')).unwrap_or(s);
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    split_top(s)?.into_iter().map(|p| parse_type(p, registry)).collect()
}

fn split_top(s: &str) -> Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(format!("unbalanced brackets in `{s}`"));
        }
    }
    if depth != 0 {
        return Err(format!("unbalanced brackets in `{s}`"));
    }
    out.push(s[start..].trim());
    Ok(out)
}

/// A concrete type with absolute references. ADTs get their declared
/// capabilities; a bare name must be unique across deployed modules.
pub fn parse_type(s: &str, registry: &dyn Registry) -> Result<SemType, String> {
    let s = s.trim();
    let (head, args) = match s.find('[') {
        Some(i) if s.ends_with(']') => (&s[..i], parse_type_list(&s[i..], registry)?),
        Some(_) => return Err(format!("malformed type `{s}`")),
        None => (s, vec![]),
    };
    let prim = |k: TypeKind| -> Result<SemType, String> {
        if !args.is_empty() {
            return Err(format!("`{head}` takes no type arguments"));
        }
        Ok(SemType::new(k, CapSet::structural()))
    };
    match head {
        "UInt" => return prim(TypeKind::UInt),
        "Int" => return prim(TypeKind::Int),
        "ID" => return prim(TypeKind::Id),
        _ => {}
    }
    let mut hits = Vec::new();
    match head.split_once('.') {
        Some((m, t)) => {
            let a = registry.resolve_name(m).ok_or_else(|| format!("unknown module `{m}`"))?;
            let md = registry.module(&a).expect("bound name");
            if let Some(i) = md.type_index(t) {
                hits.push((a, i));
            }
        }
        None => {
            for (_, a) in registry.module_names() {
                let md = registry.module(&a).expect("bound name");
                if let Some(i) = md.type_index(head) {
                    hits.push((a, i));
                }
            }
        }
    }
    let (a, i) = match hits.as_slice() {
        [one] => *one,
        [] => return Err(format!("unknown type `{head}`")),
        _ => return Err(format!("type name `{head}` is ambiguous; qualify it with its module")),
    };
    let def = &registry.module(&a).expect("bound name").types[i as usize];
    if def.type_params.len() != args.len() {
        return Err(format!("`{head}` expects {} type arguments", def.type_params.len()));
    }
    let r = TypeRef { module: ModuleId::Addr(a), index: i };
    Ok(SemType::new(TypeKind::Adt(r, args), def.caps.resolve(a)))
}
