"""Statistical-CSI rate splitting with RIS phase optimisation for the MISO downlink."""
