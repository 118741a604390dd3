"""Smoke tests to verify test infrastructure and basic module imports."""

import artifacts
import assembly
import femwave_cli as cli
import mesh_hierarchy
import ref_element as ref
import spectral
import support_plot
import wavelets


def test_ref_element_imports():
    """ref_element module imports and has key functions."""
    assert callable(ref.reference_data)
    assert callable(ref.gram)
    assert callable(ref.build_theta_xi)
    assert callable(ref.build_phi_tilde)
    assert callable(ref.format_report)


def test_mesh_hierarchy_imports():
    """mesh_hierarchy module imports and has key functions."""
    assert callable(mesh_hierarchy.load_mesh)
    assert callable(mesh_hierarchy.refine)
    assert callable(mesh_hierarchy.build_hierarchy)
    assert callable(mesh_hierarchy.node_index_set)
    assert callable(mesh_hierarchy.scaling_factor)


def test_assembly_imports():
    """assembly module imports and has key functions."""
    assert callable(assembly.assemble)
    assert callable(assembly.global_gram)
    assert callable(assembly.infsup_bound)


def test_wavelets_imports():
    """wavelets module imports and has key functions."""
    assert callable(wavelets.build_wavelets)
    assert callable(wavelets.two_level)
    assert callable(wavelets.dual_two_level)
    assert callable(wavelets.build_transform)
    assert callable(wavelets.multilevel_synthesis)


def test_spectral_imports():
    """spectral module imports and has key functions."""
    assert callable(spectral.assemble_operator)
    assert callable(spectral.lanczos_extremes)
    assert callable(spectral.wavelet_condition)
    assert callable(spectral.dual_condition)


def test_output_imports():
    """artifacts, support_plot and the CLI import and have key functions."""
    assert callable(artifacts.write_csv)
    assert callable(artifacts.write_matrix_market)
    assert callable(support_plot.generate_support_svg)
    assert callable(cli.main)
    assert callable(cli.run)
