"""
Molecule explorer page.
Canonical form, random enumerations, augmentation and SELFIES tokens for one SMILES.
"""
import streamlit as st
import pandas as pd
import sys
import os

# Add the project root to path
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from molseq.selfies import decode_selfies, encode_selfies
from molseq.smiles import (SmilesError, augment, canonical_smiles, enumerate_random, kekulize,
                           molecule_formula, parse_smiles, write_smiles)
from molseq.tokenize import tokenize_selfies, tokenize_smiles

st.set_page_config(
    page_title="molseq - Molecule Explorer",
    page_icon="🔍",
    layout="wide"
)


def token_chips(tokens):
    """Render tokens as inline chips."""
    chips = "".join(
        f"<span style='background-color: #edf2f7; border: 1px solid #cbd5e0; border-radius: 6px; "
        f"padding: 2px 6px; margin: 2px; display: inline-block; font-family: monospace;'>{t}</span>"
        for t in tokens
    )
    st.markdown(f"<div style='line-height: 2;'>{chips}</div>", unsafe_allow_html=True)


def show_explorer():
    st.title("🔍 Molecule Explorer")

    text = st.text_input("SMILES", value="CC(=O)Oc1ccccc1C(=O)O")
    if not text.strip():
        return

    try:
        mol = parse_smiles(text.strip())
    except SmilesError as e:
        st.error(f"❌ {e}")
        if e.offset is not None:
            st.code(text + "\n" + " " * e.offset + "^")
        return

    canonical = canonical_smiles(mol)
    col1, col2, col3 = st.columns(3)
    col1.metric("Atoms", mol.n_atoms, border=True)
    col2.metric("Bonds", mol.n_bonds, border=True)
    col3.metric("Formula", molecule_formula(mol), border=True)

    st.subheader("Canonical form")
    st.code(canonical)
    try:
        st.caption(f"Kekulé form: `{write_smiles(kekulize(mol))}`")
    except SmilesError as e:
        st.caption(f"⚠️ {e}")

    st.divider()
    st.subheader("Augmentation")
    c1, c2, c3 = st.columns(3)
    n_generate = c1.number_input("Generate", min_value=1, max_value=200, value=20)
    n_keep = c2.number_input("Keep shortest", min_value=1, max_value=int(n_generate), value=min(5, int(n_generate)))
    seed = c3.number_input("Seed", min_value=0, value=0)

    kept = augment(canonical, int(n_generate), int(n_keep), int(seed))
    rows = [{"SMILES": s, "length": len(s), "canonical match": canonical_smiles(parse_smiles(s)) == canonical} for s in kept]
    st.dataframe(pd.DataFrame(rows), hide_index=True, use_container_width=True)

    with st.expander("Single random enumerations"):
        for k in range(5):
            st.code(enumerate_random(canonical, int(seed) + k))

    st.divider()
    st.subheader("Tokens")
    st.markdown("**SMILES (one per character)**")
    token_chips(tokenize_smiles(canonical))

    try:
        selfies = encode_selfies(mol)
    except ValueError as e:
        st.error(f"❌ SELFIES encoding failed: {e}")
        return
    st.markdown("**SELFIES (one per bracket)**")
    st.code(selfies)
    token_chips(tokenize_selfies(selfies))
    roundtrip = canonical_smiles(decode_selfies(selfies))
    if roundtrip == canonical:
        st.success("✅ SELFIES decodes back to the same canonical SMILES")
    else:
        st.warning(f"⚠️ SELFIES decodes to {roundtrip}")

    if st.button("📊 Back to reports", type="primary", use_container_width=True):
        st.switch_page("Home.py")


show_explorer()
