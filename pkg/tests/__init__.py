"""Tests of the pts_track package."""
