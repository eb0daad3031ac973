//! Bundled RTL syntax-error knowledge base: compiler error patterns mapped to
//! fix guidance.

use crate::memory::{Document, KnowledgeBase};

pub const RTL_SYNTAX_KB: &str = "rtl_syntax";

const CORPUS: &[(&str, &str)] = &[
    ("bit_select_out_of_range", include_str!("../../data/rtl_syntax_kb/bit_select_out_of_range.txt")),
    ("blocking_in_sequential", include_str!("../../data/rtl_syntax_kb/blocking_in_sequential.txt")),
    ("case_missing_default", include_str!("../../data/rtl_syntax_kb/case_missing_default.txt")),
    ("function_missing_return", include_str!("../../data/rtl_syntax_kb/function_missing_return.txt")),
    ("generate_without_label", include_str!("../../data/rtl_syntax_kb/generate_without_label.txt")),
    ("illegal_port_declaration", include_str!("../../data/rtl_syntax_kb/illegal_port_declaration.txt")),
    ("include_not_found", include_str!("../../data/rtl_syntax_kb/include_not_found.txt")),
    ("incomplete_sensitivity", include_str!("../../data/rtl_syntax_kb/incomplete_sensitivity.txt")),
    ("invalid_number_literal", include_str!("../../data/rtl_syntax_kb/invalid_number_literal.txt")),
    ("keyword_as_identifier", include_str!("../../data/rtl_syntax_kb/keyword_as_identifier.txt")),
    ("latch_inferred", include_str!("../../data/rtl_syntax_kb/latch_inferred.txt")),
    ("missing_endmodule", include_str!("../../data/rtl_syntax_kb/missing_endmodule.txt")),
    ("missing_module", include_str!("../../data/rtl_syntax_kb/missing_module.txt")),
    ("missing_semicolon", include_str!("../../data/rtl_syntax_kb/missing_semicolon.txt")),
    ("multiple_drivers", include_str!("../../data/rtl_syntax_kb/multiple_drivers.txt")),
    ("parameter_override", include_str!("../../data/rtl_syntax_kb/parameter_override.txt")),
    ("port_width_mismatch", include_str!("../../data/rtl_syntax_kb/port_width_mismatch.txt")),
    ("reg_assigned_in_assign", include_str!("../../data/rtl_syntax_kb/reg_assigned_in_assign.txt")),
    ("signed_unsigned_mix", include_str!("../../data/rtl_syntax_kb/signed_unsigned_mix.txt")),
    ("timescale_missing", include_str!("../../data/rtl_syntax_kb/timescale_missing.txt")),
    ("undeclared_identifier", include_str!("../../data/rtl_syntax_kb/undeclared_identifier.txt")),
    ("unexpected_eof_comment", include_str!("../../data/rtl_syntax_kb/unexpected_eof_comment.txt")),
    ("unmatched_begin_end", include_str!("../../data/rtl_syntax_kb/unmatched_begin_end.txt")),
    ("unterminated_string", include_str!("../../data/rtl_syntax_kb/unterminated_string.txt")),
];

/// Documents of the bundled corpus, sorted by id.
pub fn rtl_syntax_documents() -> Vec<Document> {
    CORPUS.iter().map(|(id, body)| Document::from_file_body(*id, body)).collect()
}

pub fn seed_rtl_syntax_kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new(RTL_SYNTAX_KB);
    for doc in rtl_syntax_documents() {
        kb.ingest(doc).expect("bundled document ids are unique");
    }
    kb
}
