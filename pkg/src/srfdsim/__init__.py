"""Behavioral simulator of a reference-less bang-bang CDR with semi-rotational frequency detection."""
