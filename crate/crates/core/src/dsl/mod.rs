//! The supported scenario-language fragment: lexer, parser, elaboration,
//! canonical printer and fragment validation.

pub mod ast;
mod elaborate;
mod lexer;
mod parser;
pub mod pretty;
mod validate;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ast::*;
pub use elaborate::{builtin, const_value};
pub use validate::{validate as validate_fragment, Diagnostic, BUILTIN_PROPERTIES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: expected {expected}")]
    Syntax { line: usize, col: usize, expected: String },
    #[error("{line}:{col}: unsupported construct: {construct}")]
    Unsupported { line: usize, col: usize, construct: String },
    #[error("{line}:{col}: `{name}` is not defined before this use")]
    UndefinedName { line: usize, col: usize, name: String },
    #[error("no parameter named `{0}` in the program")]
    UnknownParam(String),
}

impl ParseError {
    /// Renders the error as `file:line:col: message`.
    pub fn with_file(&self, file: &str) -> String {
        match self {
            ParseError::UnknownParam(_) => format!("{file}: {self}"),
            _ => format!("{file}:{self}"),
        }
    }
}

/// Parses and elaborates a program with its declared parameter values.
pub fn parse(source: &str) -> Result<ScenarioAst, ParseError> {
    parse_with_params(source, &BTreeMap::new())
}

/// Parses and elaborates a program, overriding `param` declarations.
pub fn parse_with_params(source: &str, overrides: &BTreeMap<String, f64>) -> Result<ScenarioAst, ParseError> {
    let toks = lexer::tokenize(source)?;
    let stmts = parser::Parser::new(toks).program()?;
    elaborate::elaborate(&stmts, overrides)
}

/// Canonical source text of an elaborated program.
pub fn pretty_print(ast: &ScenarioAst) -> String {
    pretty::program(ast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomap::{RegionKind, RegionSel};

    const CAR_AHEAD: &str = "ego = Car on road\n\
        otherCar = Car ahead of ego by Range(4, 10)\n\
        require (distance from otherCar to intersection) > 4\n";

    const PARKED_PAIR: &str = "spot = OrientedPoint on curb\n\
        ego = Car right of spot by 0.5\n\
        sideCar = Car left of spot by 0.5\n";

    const TRAFFIC_CHAIN: &str = "param numCars = 3\n\
        ego = Car on lane\n\
        c = ego\n\
        for i in range(numCars):\n    \
            c = Car ahead of c by Range(4, 10), facing Range(-0.05, 0.05) relative to roadDirection\n";

    #[test]
    fn two_object_program_with_requirement() {
        let ast = parse(CAR_AHEAD).unwrap();
        assert_eq!(ast.objects().count(), 2);
        assert_eq!(ast.requirements.len(), 1);
        assert!(validate_fragment(&ast).is_empty());
    }

    #[test]
    fn minimal_program() {
        let ast = parse("ego = Car on road").unwrap();
        assert_eq!(ast.objects().count(), 1);
        assert!(ast.requirements.is_empty());
        let o = ast.defs[0].object().unwrap();
        assert_eq!(o.specifiers[0].kind, SpecifierKind::On(Expr::Region(RegionSel::Kind(RegionKind::Road))));
    }

    #[test]
    fn following_is_rejected() {
        let err = parse("ego = Car on road\nc = Car following roadDirection for 5\n").unwrap_err();
        assert!(matches!(err, ParseError::Unsupported { line: 2, .. }), "{err}");
    }

    #[test]
    fn follow_operator_and_imports_are_rejected() {
        assert!(matches!(
            parse("ego = Car at follow roadDirection from (0, 0) for 3\n"),
            Err(ParseError::Unsupported { .. })
        ));
        assert!(matches!(parse("import numpy\n"), Err(ParseError::Unsupported { .. })));
        assert!(matches!(parse("from x import y\n"), Err(ParseError::Unsupported { .. })));
        assert!(matches!(parse("ego = Car at foo(1)\n"), Err(ParseError::Unsupported { .. })));
    }

    #[test]
    fn shared_intermediate_parses_clean() {
        let ast = parse(PARKED_PAIR).unwrap();
        assert_eq!(ast.intermediates().count(), 1);
        assert!(validate_fragment(&ast).is_empty());
    }

    #[test]
    fn loops_unroll_with_fresh_names() {
        let ast = parse(TRAFFIC_CHAIN).unwrap();
        let names: Vec<&str> = ast.objects().map(|d| d.name.as_str()).collect();
        assert_eq!(names, ["ego", "c", "c_1", "c_2"]);
        let c2 = ast.def("c_2").unwrap().object().unwrap();
        match &c2.specifiers[0].kind {
            SpecifierKind::AheadOf(Expr::Ident(r), _) => assert_eq!(r, "c_1"),
            other => panic!("{other:?}"),
        }
        assert!(validate_fragment(&ast).is_empty());
    }

    #[test]
    fn param_override() {
        let mut o = BTreeMap::new();
        o.insert("numCars".to_string(), 5.0);
        let ast = parse_with_params(TRAFFIC_CHAIN, &o).unwrap();
        assert_eq!(ast.objects().count(), 6);
        assert_eq!(ast.param("numCars"), Some(5.0));
        o.insert("nope".to_string(), 1.0);
        assert_eq!(parse_with_params(TRAFFIC_CHAIN, &o), Err(ParseError::UnknownParam("nope".into())));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse("ego = Car on road\notherCar = Car ahead ego\n").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 22)),
            e => panic!("{e}"),
        }
        assert!(err_text("ego = Car on road\nx = (1, 2\n").contains("closing bracket"));
    }

    fn err_text(src: &str) -> String {
        parse(src).unwrap_err().to_string()
    }

    #[test]
    fn undefined_names_are_reported() {
        let err = parse("ego = Car ahead of other by 3\n").unwrap_err();
        assert_eq!(err, ParseError::UndefinedName { line: 1, col: 11, name: "other".into() });
    }

    #[test]
    fn requirement_through_shared_intermediate_is_flagged() {
        let src = "spot = OrientedPoint on curb\n\
            ego = Car right of spot by 0.5\n\
            require (distance from ego to spot) < 3\n";
        let diags = validate_fragment(&parse(src).unwrap());
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("spot"));
    }

    #[test]
    fn specifier_multiplicity() {
        let diags = validate_fragment(&parse("ego = Car at (0, 0), on road\n").unwrap());
        assert_eq!(diags.len(), 1);
        let diags = validate_fragment(&parse("ego = Car facing 0, facing 1\n").unwrap());
        assert_eq!(diags.len(), 1);
    }

    #[test]
    fn missing_ego_and_type_errors() {
        assert_eq!(validate_fragment(&parse("c = Car on road\n").unwrap()).len(), 1);
        let diags = validate_fragment(&parse("ego = Car on 3\n").unwrap());
        assert_eq!(diags.len(), 1, "{diags:?}");
        let diags = validate_fragment(&parse("ego = Car on road\nrequire ego.position > 3\n").unwrap());
        assert_eq!(diags.len(), 1, "{diags:?}");
    }

    #[test]
    fn degrees_and_vectors() {
        let ast = parse("ego = Car at 1 @ 2, facing 90 deg\n").unwrap();
        let o = ast.defs[0].object().unwrap();
        assert_eq!(
            o.specifiers[0].kind,
            SpecifierKind::At(Expr::Vector(Expr::Number(1.0).boxed(), Expr::Number(2.0).boxed()))
        );
        assert_eq!(o.specifiers[1].kind, SpecifierKind::Facing(Expr::Number(std::f64::consts::FRAC_PI_2)));
    }

    #[test]
    fn pretty_print_round_trips_examples() {
        for src in [CAR_AHEAD, PARKED_PAIR, TRAFFIC_CHAIN] {
            let a = parse(src).unwrap();
            let text = pretty_print(&a);
            let b = parse(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
            assert_eq!(a.without_spans(), b.without_spans(), "{text}");
            assert_eq!(text, pretty_print(&b));
        }
    }

    #[test]
    fn operators_round_trip() {
        let src = "ego = Car on road, with color 2\n\
            p = Pedestrian on visible sidewalk, apparently facing 0.3 from ego\n\
            q = Car beyond p by (0, 4) from ego, facing toward p\n\
            v = (ego.position offset along roadDirection by (1, 2)) relative to ego\n\
            r = Object at v, facing away from (front of ego)\n\
            require (ego can see p) and not (p in intersection) or (relative heading of q) <= -0.5\n\
            require (angle from ego to q) != (apparent heading of q from p) * 2 - ego.color\n\
            require (roadDirection at (back of ego)) >= Options([1, 2]) / Normal(0, 1)\n";
        let a = parse(src).unwrap();
        assert!(validate_fragment(&a).is_empty(), "{:?}", validate_fragment(&a));
        let b = parse(&pretty_print(&a)).unwrap();
        assert_eq!(a.without_spans(), b.without_spans());
    }

    #[test]
    fn aliases_do_not_create_objects() {
        let ast = parse("ego = Car on road\nleader = ego\nc = Car ahead of leader by 5\n").unwrap();
        assert_eq!(ast.defs.len(), 2);
        let ego2 = parse("ego = Car on road\nego = Car on road\n");
        assert!(ego2.is_err());
    }
}
