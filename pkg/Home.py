"""
molseq dashboard - main page
Browse experiment reports: headline scores, setup comparisons and per-task results.
"""
import streamlit as st
import pandas as pd
import sys
import os

# Add the project root to path
sys.path.append(os.path.dirname(__file__))

from molseq.experiment import REFERENCE_SCORES, compare_reports, load_report, summary_frame
from molseq.settings import load_settings
from molseq.storage import get_data_path, list_reports

# Page config
st.set_page_config(
    page_title="molseq - Molecular Sequence Models",
    page_icon="🧪",
    layout="wide"
)


@st.cache_data
def load_reports(paths):
    """Load every parsable report; broken files are listed instead of failing the page."""
    reports, broken = [], []
    for path in paths:
        try:
            reports.append(load_report(path))
        except Exception as e:
            broken.append((path, str(e)))
    return reports, broken


def headline_table(reports):
    """Reports in the (setup, mean, std) layout alongside the reference scores."""
    frame = summary_frame(reports)
    frame["reference mean"] = frame["setup"].map(lambda s: REFERENCE_SCORES.get(s, (None, None))[0])
    frame["reference std"] = frame["setup"].map(lambda s: REFERENCE_SCORES.get(s, (None, None))[1])
    return frame


@st.dialog("Run details", width="large")
def show_run_details(report):
    """Raw runs and selected models for one report."""
    st.subheader(f"🔬 {report.setup_name}")

    col1, col2, col3 = st.columns(3)
    col1.metric("Tasks", len(report.tasks))
    col2.metric("Runs", len(report.runs))
    col3.metric("Failed runs", len(report.diagnostics))

    st.markdown("**Breakdowns**")
    st.dataframe(pd.DataFrame(report.aggregates).T, use_container_width=True)

    st.markdown("**Parameter counts by hidden size**")
    st.dataframe(
        pd.DataFrame(sorted(report.parameter_counts.items(), key=lambda kv: int(kv[0])), columns=["hidden", "parameters"]),
        hide_index=True,
    )

    runs = pd.DataFrame(report.runs)
    st.markdown("**All runs**")
    st.dataframe(runs, hide_index=True, use_container_width=True)

    if report.excluded_tasks:
        st.warning("Excluded (single-class test split): " + "; ".join(report.excluded_tasks))


def show_report_card(report):
    headline = report.aggregates["configs"]
    score = "undefined" if headline["mean"] is None else f"{headline['mean']:.3f} ± {headline['std']:.3f}"
    reference = REFERENCE_SCORES.get(report.setup_name)
    reference_text = f"reference {reference[0]:.3f} ± {reference[1]:.3f}" if reference else "no reference"

    card_col, button_col = st.columns([4, 1])
    with card_col:
        st.markdown(f"""
        <div style="
            background-color: #f8f9fa;
            border: 1px solid #2d5aa0;
            border-radius: 12px;
            padding: 16px;
            box-shadow: 0 2px 4px rgba(0,0,0,0.1);
            display: flex;
            justify-content: space-between;
            align-items: center;
        ">
            <div>
                <h3 style="margin: 0; font-size: 20px; color: #2d3748;">{report.setup_name}</h3>
                <p style="margin: 2px 0 0 0; color: #718096; font-size: 14px;">
                    {len(report.tasks)} tasks • {len(report.runs)} runs • {reference_text}
                </p>
            </div>
            <div style="font-size: 24px; font-weight: bold; color: #2d5aa0;">{score}</div>
        </div>
        """, unsafe_allow_html=True)
    with button_col:
        st.markdown("<div style='margin-top: 10px;'></div>", unsafe_allow_html=True)
        if st.button("Details", key=f"details_{report.setup_name}", use_container_width=True):
            show_run_details(report)
    st.markdown("<div style='margin-bottom: 8px;'></div>", unsafe_allow_html=True)


def show_dashboard():
    """Display the report dashboard."""
    settings = load_settings()

    st.title("🧪 molseq Experiment Reports")
    st.caption("Test ROC-AUC on SIDER side-effect tasks for LSTM and QK-LSTM on SMILES/SELFIES inputs")

    with st.sidebar:
        report_dir = st.text_input("Report directory", value=get_data_path("reports", data_dir=settings.data_dir))
        if st.button("Reload", type="secondary"):
            st.cache_data.clear()

    paths = list_reports(report_dir)
    if not paths:
        st.info(f"No JSON reports found in `{report_dir}`. Run `molseq_cli.py suite --out-dir {report_dir}` first.")
        if st.button("🔍 Explore molecules", type="primary", use_container_width=True):
            st.switch_page("pages/Molecules.py")
        return

    reports, broken = load_reports(tuple(paths))
    for path, error in broken:
        st.error(f"❌ Could not load {path}: {error}")
    if not reports:
        return

    st.divider()
    st.subheader("Headline scores")
    for report in reports:
        show_report_card(report)

    st.dataframe(headline_table(reports), hide_index=True, use_container_width=True)

    st.divider()
    st.subheader("Comparisons")
    deltas = compare_reports(reports)
    if deltas.empty:
        st.info("Load reports for paired setups (e.g. SMILES and Augmented SMILES) to see deltas.")
    else:
        st.dataframe(deltas, hide_index=True, use_container_width=True)

    st.divider()
    st.subheader("Per-task scores")
    chosen = st.selectbox("Report", [r.setup_name for r in reports])
    report = next(r for r in reports if r.setup_name == chosen)
    if report.task_scores:
        tasks = pd.DataFrame(sorted(report.task_scores.items()), columns=["task", "test ROC-AUC"]).set_index("task")
        st.bar_chart(tasks)
    else:
        st.info("No task scores in this report.")

    if st.button("🔍 Explore molecules", type="primary", use_container_width=True):
        st.switch_page("pages/Molecules.py")


def main():
    """Main application entry point."""
    show_dashboard()


if __name__ == "__main__":
    main()
