//! Resolution between the document layer and the semantic model: name and
//! constant resolution on the way in, deterministic rendering on the way out.

use std::collections::BTreeMap;

use thiserror::Error;

use super::text::{self, DeclItem, SyntaxError};
use super::xml::{self, LabelDoc, LabelKind, LocationDoc, SpecDocument, TemplateDoc, TransitionDoc, XmlError};
use crate::model::{
    AgentGraph, Edge, Expr, MasTemplate, ModelError, Select, Sync, Template, Update, VarDecl,
    VarKind,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("{context}: {source}")]
    Syntax {
        context: String,
        source: SyntaxError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{context}: {detail}")]
    Resolve { context: String, detail: String },
}

fn syn(context: impl Into<String>) -> impl FnOnce(SyntaxError) -> ParseError {
    let context = context.into();
    move |source| ParseError::Syntax { context, source }
}

fn resolve_err(context: impl Into<String>, detail: impl Into<String>) -> ParseError {
    ParseError::Resolve {
        context: context.into(),
        detail: detail.into(),
    }
}

/// Parse a model file all the way to a validated [`MasTemplate`].
pub fn parse_model(src: &str) -> Result<MasTemplate, ParseError> {
    resolve(&xml::parse_document(src)?)
}

/// Serialize a model to its canonical byte form. Deterministic; the output
/// parses back to an equal model.
pub fn serialize_model(model: &MasTemplate) -> String {
    xml::serialize_document(&document_of(model))
}

struct Declarations {
    constants: BTreeMap<String, i64>,
    channels: Vec<String>,
    vars: Vec<VarDecl>,
}

/// Parse a declarations block. Constants may reference earlier constants;
/// variable ranges and initializers must fold to literals.
fn parse_decls(
    src: &str,
    context: &str,
    outer_constants: &BTreeMap<String, i64>,
    kind: VarKind,
) -> Result<Declarations, ParseError> {
    let items = text::parse_declarations(src).map_err(syn(context))?;
    let mut constants = outer_constants.clone();
    let mut channels = Vec::new();
    let mut vars = Vec::new();
    for item in items {
        match item {
            DeclItem::Const { name, value } => {
                let value = fold_const(&value, &constants, context)?;
                if constants.insert(name.clone(), value).is_some() {
                    return Err(resolve_err(context, format!("constant `{name}` redefined")));
                }
            }
            DeclItem::Channels(names) => channels.extend(names),
            DeclItem::Var {
                name,
                lo,
                hi,
                initial,
            } => {
                let lo = fold_const(&lo, &constants, context)?;
                let hi = fold_const(&hi, &constants, context)?;
                let initial = match initial {
                    Some(e) => fold_const(&e, &constants, context)?,
                    None => {
                        if lo <= 0 && 0 <= hi {
                            0
                        } else {
                            return Err(resolve_err(
                                context,
                                format!(
                                    "variable `{name}` has no initializer and 0 is outside [{lo},{hi}]"
                                ),
                            ));
                        }
                    }
                };
                vars.push(VarDecl {
                    name,
                    lo,
                    hi,
                    initial,
                    kind,
                });
            }
        }
    }
    Ok(Declarations {
        constants,
        channels,
        vars,
    })
}

fn fold_const(
    expr: &Expr,
    constants: &BTreeMap<String, i64>,
    context: &str,
) -> Result<i64, ParseError> {
    let substituted = substitute_constants(expr, constants);
    match substituted.fold() {
        Expr::Lit(v) => Ok(v),
        other => Err(resolve_err(
            context,
            format!("expected a constant expression, `{other}` does not fold to a literal"),
        )),
    }
}

fn substitute_constants(expr: &Expr, constants: &BTreeMap<String, i64>) -> Expr {
    expr.substitute(&|name| constants.get(name).map(|v| Expr::Lit(*v)))
}

/// Rewrite source-level `T(k).f` / `T.f` member syntax into plain variable
/// references when the display form names a declared variable. Qualified
/// names occur in combined-model files.
fn rewrite_members(expr: &Expr, declared: &dyn Fn(&str) -> bool) -> Expr {
    match expr {
        Expr::Member {
            template,
            index,
            field,
        } => {
            let display = match index.as_deref() {
                None => Some(format!("{template}.{field}")),
                Some(Expr::Lit(i)) => Some(format!("{template}({i}).{field}")),
                Some(_) => None,
            };
            if let Some(name) = display {
                if declared(&name) {
                    return Expr::Var(name);
                }
            }
            expr.clone()
        }
        Expr::Lit(_) | Expr::Var(_) => expr.clone(),
        Expr::Unary(op, e) => Expr::Unary(*op, Box::new(rewrite_members(e, declared))),
        Expr::Binary(op, l, r) => Expr::Binary(
            *op,
            Box::new(rewrite_members(l, declared)),
            Box::new(rewrite_members(r, declared)),
        ),
        Expr::Quant {
            kind,
            var,
            lo,
            hi,
            body,
        } => Expr::Quant {
            kind: *kind,
            var: var.clone(),
            lo: Box::new(rewrite_members(lo, declared)),
            hi: Box::new(rewrite_members(hi, declared)),
            body: Box::new(rewrite_members(body, declared)),
        },
        Expr::AtLocation { .. } | Expr::InstanceVar { .. } => expr.clone(),
    }
}

/// Resolve a parsed document into a validated model: declarations parsed,
/// constants substituted everywhere, label text turned into typed edges.
pub fn resolve(doc: &SpecDocument) -> Result<MasTemplate, ParseError> {
    let globals = parse_decls(
        &doc.global_declaration,
        "global declaration",
        &BTreeMap::new(),
        VarKind::Global,
    )?;

    let mut templates = Vec::new();
    for tpl in &doc.templates {
        templates.push(resolve_template(tpl, &globals)?);
    }

    let system = text::parse_system(&doc.system).map_err(syn("system section"))?;
    let mut counted = Vec::new();
    for (name, count_expr) in system {
        let (graph, template_constants) = templates
            .iter()
            .find(|entry: &&(AgentGraph, BTreeMap<String, i64>)| entry.0.name == name)
            .cloned()
            .ok_or_else(|| {
                resolve_err("system section", format!("unknown template `{name}`"))
            })?;
        let count = fold_const(&count_expr, &template_constants, "system section")?;
        if count < 1 || count > u32::MAX as i64 {
            return Err(resolve_err(
                "system section",
                format!("instance count {count} for `{name}` out of range"),
            ));
        }
        counted.push(Template { graph, count: count as u32 });
    }
    // Every declared template must be instantiated exactly once in the
    // system line; repeated or missing entries are ambiguous.
    for (graph, _) in &templates {
        let occurrences = counted.iter().filter(|t| t.graph.name == graph.name).count();
        if occurrences != 1 {
            return Err(resolve_err(
                "system section",
                format!(
                    "template `{}` must appear exactly once in the system line, found {occurrences}",
                    graph.name
                ),
            ));
        }
    }

    let model = MasTemplate {
        templates: counted,
        globals: globals.vars,
        channels: globals.channels,
        constants: globals.constants,
    };
    model.validate()?;
    Ok(model)
}

fn resolve_template(
    tpl: &TemplateDoc,
    globals: &Declarations,
) -> Result<(AgentGraph, BTreeMap<String, i64>), ParseError> {
    let context = format!("template `{}`", tpl.name);
    let locals = parse_decls(
        &tpl.declaration,
        &format!("{context} declaration"),
        &globals.constants,
        VarKind::Private,
    )?;
    if !locals.channels.is_empty() {
        return Err(resolve_err(
            &context,
            "channels must be declared in the global declaration",
        ));
    }
    let constants = locals.constants;

    let mut id_to_name: BTreeMap<&str, String> = BTreeMap::new();
    let mut locations = Vec::new();
    for loc in &tpl.locations {
        let name = loc.name.clone().unwrap_or_else(|| loc.id.clone());
        id_to_name.insert(loc.id.as_str(), name.clone());
        locations.push(name);
    }
    let initial = id_to_name
        .get(tpl.init_ref.as_str())
        .cloned()
        .ok_or_else(|| {
            resolve_err(&context, format!("init ref `{}` names no location", tpl.init_ref))
        })?;

    let declared = |name: &str| {
        locals.vars.iter().any(|v| v.name == name)
            || globals.vars.iter().any(|v| v.name == name)
    };

    let mut edges = Vec::new();
    for (i, tr) in tpl.transitions.iter().enumerate() {
        let edge_ctx = format!("{context}, transition #{i}");
        let source = id_to_name
            .get(tr.source.as_str())
            .cloned()
            .ok_or_else(|| resolve_err(&edge_ctx, format!("source ref `{}` names no location", tr.source)))?;
        let target = id_to_name
            .get(tr.target.as_str())
            .cloned()
            .ok_or_else(|| resolve_err(&edge_ctx, format!("target ref `{}` names no location", tr.target)))?;

        let mut edge = Edge::internal(source, target);
        let mut seen = Vec::new();
        for label in &tr.labels {
            if seen.contains(&label.kind) {
                return Err(resolve_err(
                    &edge_ctx,
                    format!("duplicate {} label", label.kind.as_str()),
                ));
            }
            seen.push(label.kind);
            match label.kind {
                LabelKind::Select => {
                    for sel in text::parse_selects(&label.text).map_err(syn(&edge_ctx))? {
                        let lo = fold_const(&sel.lo, &constants, &edge_ctx)?;
                        let hi = fold_const(&sel.hi, &constants, &edge_ctx)?;
                        edge.selects.push(Select {
                            name: sel.name,
                            lo,
                            hi,
                        });
                    }
                }
                LabelKind::Guard => {
                    let raw = text::parse_expression(&label.text).map_err(syn(&edge_ctx))?;
                    edge.guard =
                        substitute_constants(&rewrite_members(&raw, &declared), &constants);
                }
                LabelKind::Synchronisation => {
                    let (channel, dir) = text::parse_sync(&label.text).map_err(syn(&edge_ctx))?;
                    edge.sync = Some(Sync { channel, dir });
                }
                LabelKind::Assignment => {
                    for update in text::parse_updates(&label.text).map_err(syn(&edge_ctx))? {
                        edge.updates.push(Update {
                            target: update.target,
                            value: substitute_constants(
                                &rewrite_members(&update.value, &declared),
                                &constants,
                            ),
                        });
                    }
                }
            }
        }
        edges.push(edge);
    }

    Ok((
        AgentGraph {
            name: tpl.name.clone(),
            locations,
            initial,
            privates: locals.vars,
            edges,
        },
        constants,
    ))
}

/// Render a model back into document form with synthesized ids and layout
/// coordinates. A pure function of the model, so serialization is
/// deterministic.
pub fn document_of(model: &MasTemplate) -> SpecDocument {
    let mut global_decl = String::new();
    for (name, value) in &model.constants {
        global_decl.push_str(&format!("const int {name} = {value};\n"));
    }
    if !model.channels.is_empty() {
        global_decl.push_str(&format!("chan {};\n", model.channels.join(", ")));
    }
    for var in &model.globals {
        global_decl.push_str(&render_var(var));
    }

    let templates = model
        .templates
        .iter()
        .map(|t| template_doc(&t.graph))
        .collect();

    let entries: Vec<String> = model
        .templates
        .iter()
        .map(|t| {
            if t.count == 1 {
                t.graph.name.clone()
            } else {
                format!("{}({})", t.graph.name, t.count)
            }
        })
        .collect();
    let system = if entries.is_empty() {
        "system ;".to_string()
    } else {
        format!("system {};", entries.join(", "))
    };

    SpecDocument {
        global_declaration: global_decl,
        templates,
        system,
    }
}

fn render_var(var: &VarDecl) -> String {
    format!(
        "int[{},{}] {} = {};\n",
        var.lo, var.hi, var.name, var.initial
    )
}

fn template_doc(graph: &AgentGraph) -> TemplateDoc {
    let mut declaration = String::new();
    for var in &graph.privates {
        declaration.push_str(&render_var(var));
    }

    let id_of = |name: &str| {
        let idx = graph
            .locations
            .iter()
            .position(|l| l == name)
            .expect("validated location");
        format!("id{idx}")
    };

    let locations = graph
        .locations
        .iter()
        .enumerate()
        .map(|(i, name)| LocationDoc {
            id: format!("id{i}"),
            name: Some(name.clone()),
            x: Some((i as i64 % 4) * 200),
            y: Some((i as i64 / 4) * 150),
        })
        .collect();

    let transitions = graph
        .edges
        .iter()
        .map(|edge| {
            let mut labels = Vec::new();
            if !edge.selects.is_empty() {
                labels.push(LabelDoc {
                    kind: LabelKind::Select,
                    text: edge
                        .selects
                        .iter()
                        .map(|s| format!("{} : int[{},{}]", s.name, s.lo, s.hi))
                        .collect::<Vec<_>>()
                        .join(", "),
                    x: None,
                    y: None,
                });
            }
            if !edge.guard.is_truth() {
                labels.push(LabelDoc {
                    kind: LabelKind::Guard,
                    text: edge.guard.to_string(),
                    x: None,
                    y: None,
                });
            }
            if let Some(sync) = &edge.sync {
                labels.push(LabelDoc {
                    kind: LabelKind::Synchronisation,
                    text: sync.to_string(),
                    x: None,
                    y: None,
                });
            }
            if !edge.updates.is_empty() {
                labels.push(LabelDoc {
                    kind: LabelKind::Assignment,
                    text: edge
                        .updates
                        .iter()
                        .map(|u| u.to_string())
                        .collect::<Vec<_>>()
                        .join(", "),
                    x: None,
                    y: None,
                });
            }
            TransitionDoc {
                source: id_of(&edge.source),
                target: id_of(&edge.target),
                labels,
            }
        })
        .collect();

    TemplateDoc {
        name: graph.name.clone(),
        declaration,
        locations,
        init_ref: id_of(&graph.initial),
        transitions,
    }
}
