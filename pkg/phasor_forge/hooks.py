from . import __version__ as app_version  # noqa: F401

app_name = "phasor_forge"
app_title = "Phasor Forge"
app_publisher = "phasor_forge contributors"
app_description = "Phasor FLIM analysis on synthetic phantoms"
app_license = "mit"

# -----------------------------
# Pipeline stages
# -----------------------------
# Run in order by phasor_forge.api.pipeline.run_pipeline; each takes the
# shared context and is timed under its name without the "stage_" prefix.
pipeline_stages = [
	"phasor_forge.api.pipeline.stage_simulate",
	"phasor_forge.api.pipeline.stage_phasor",
	"phasor_forge.api.pipeline.stage_denoise",
	"phasor_forge.api.pipeline.stage_segment",
	"phasor_forge.api.pipeline.stage_render",
	"phasor_forge.api.pipeline.stage_write",
]

# -----------------------------
# Denoise methods
# -----------------------------
denoise_methods = {
	"median": "phasor_forge.api.pipeline.median_method",
	"mean": "phasor_forge.api.pipeline.mean_method",
	"cnn": "phasor_forge.api.pipeline.cnn_method",
}
