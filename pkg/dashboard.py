import streamlit as st
import pandas as pd
import subprocess
import logging
import os
import sys

from main import SUBCOMMANDS
from superres.results import read_results, summarize_results

# Configure Logging
logging.basicConfig(
    filename='dashboard_log.log',
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s]: %(message)s'
)

# Streamlit Config
st.set_page_config(page_title="Super-Resolution Crossbar Results", layout="wide", initial_sidebar_state="expanded")

# Path Constants
RESULTS_PATH = os.getenv("SUPERRES_RESULTS_DIR", "results")
CONFIGS_PATH = "configs"

# Columns that label a group of raw rows, per experiment
GROUP_KEYS = {
    "rce_grid": ["m", "L", "L_C"],
    "ratio_sweep": ["ratio", "m", "L", "L_C"],
    "aging_sweep": ["aging_ratio", "m", "L", "L_C"],
    "noise_sweep": ["input_noise_variance", "m", "L", "L_C"],
    "wire_table": ["condition", "m", "L", "L_C"],
}


# Helper Functions
@st.cache_data
def load_results(path, modified):
    try:
        return read_results(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logging.error(f"Could not load {path}: {e}")
        return {}, pd.DataFrame()


def list_results():
    if not os.path.isdir(RESULTS_PATH):
        return []
    return sorted(f for f in os.listdir(RESULTS_PATH) if f.endswith(".csv"))


def run_experiment(subcommand, config, out, seed=None):
    command = [sys.executable, "main.py", subcommand, "--config", config, "--out", out, "--quiet"]
    if seed is not None:
        command += ["--seed", str(seed)]
    try:
        subprocess.run(command, check=True, capture_output=True, text=True)
        st.success(f"✅ {subcommand} written to {out}")
        logging.info(f"{subcommand} ran successfully with {config}.")
    except subprocess.CalledProcessError as e:
        st.error(f"❌ {subcommand} exited with code {e.returncode}:\n\n{e.stderr}")
        logging.error(f"Error running {subcommand}: {e.stderr}")


# Sidebar for Controls and Execution
st.sidebar.title("⚙️ Experiment Controls")

st.sidebar.markdown("---")
st.sidebar.header("Run an Experiment")
selected_command = st.sidebar.selectbox("Experiment:", list(SUBCOMMANDS))
config_path = st.sidebar.text_input("Config file:", os.path.join(CONFIGS_PATH, f"{selected_command}.ini"))
seed_text = st.sidebar.text_input("Seed override (optional):", "")

if st.sidebar.button("🚀 Run"):
    out_path = os.path.join(RESULTS_PATH, f"{selected_command}.csv")
    with st.spinner(f"Running {selected_command}..."):
        run_experiment(selected_command, config_path, out_path, seed_text.strip() or None)

st.sidebar.markdown("---")
st.sidebar.header("Browse Results")
files = list_results()
selected_file = st.sidebar.selectbox("Result file:", files) if files else None

# Main Dashboard
st.title("📊 Super-Resolution Crossbar Results")

if selected_file is None:
    st.warning(f"No result files in {RESULTS_PATH}/ yet. Run an experiment from the sidebar.")
    st.stop()

path = os.path.join(RESULTS_PATH, selected_file)
meta, frame = load_results(path, os.path.getmtime(path))
experiment = meta.get("experiment", "")

st.markdown(
    f"**Experiment:** `{experiment}` &nbsp; **Seed:** `{meta.get('seed', '?')}` &nbsp; "
    f"**Config hash:** `{meta.get('config_sha256', '?')[:12]}` &nbsp; **Version:** `{meta.get('version', '?')}`"
)

tab1, tab2, tab3 = st.tabs(["📈 Summary", "🧾 Raw Rows", "ℹ️ Provenance"])

with tab1:
    if experiment in GROUP_KEYS and "rce_percent" in frame.columns:
        keys = [k for k in GROUP_KEYS[experiment] if k in frame.columns]
        summary = summarize_results(frame, keys)
        st.dataframe(summary, use_container_width=True)

        st.markdown("### Mean RCE against L")
        label = keys[0] if keys[0] not in ("m", "L", "L_C") else None
        view = summary
        if label is not None:
            choice = st.selectbox(f"Select {label}:", view[label].unique())
            view = view[view[label] == choice]
        chart = view.pivot_table(index="L", columns="m", values="mean")
        st.line_chart(chart)
    elif experiment == "nn_grid":
        st.dataframe(frame, use_container_width=True)
        chart = frame.pivot_table(index="L_C", columns="variability_frac", values="accuracy_percent")
        st.line_chart(chart)
    else:
        st.dataframe(frame, use_container_width=True)

with tab2:
    row_types = frame["row_type"].unique().tolist() if "row_type" in frame.columns else []
    shown = st.multiselect("Row types", row_types, default=row_types)
    st.dataframe(frame[frame["row_type"].isin(shown)] if row_types else frame, use_container_width=True)

with tab3:
    st.json(meta)
    st.markdown(f"`{path}` has {len(frame)} rows.")
