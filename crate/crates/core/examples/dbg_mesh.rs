fn main() {
    eprintln!("start");
    let mesh = epcal_core::mesh::generate_cruciform(1.5, 4.5, 0.12, (12, 1)).unwrap();
    eprintln!("built: {} elements, {} nodes", mesh.n_elements(), mesh.n_nodes());
}
