//! Closest flip point of a linear two-class model, checked against the
//! closed-form projection onto the hyperplane.

use flippoint::flip::{closest_flip, FlipOptions};
use flippoint::Network;
use nalgebra::{DMatrix, DVector};

fn main() -> flippoint::Result<()> {
    let w = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, -0.5, 1.0, 2.0]);
    let b = DVector::from_vec(vec![0.3, -0.1]);
    let net = Network::linear(w.clone(), b.clone())?;
    let x = DVector::from_vec(vec![1.0, 0.5, -1.0]);

    let flip = closest_flip(&net, &x, (0, 1), &FlipOptions::default())?;

    let n = w.row(0).transpose() - w.row(1).transpose();
    let c = b[0] - b[1];
    let expected = (n.dot(&x) + c).abs() / n.norm();
    println!("status          {}", flip.status.as_str());
    println!("distance        {:.12}", flip.distance);
    println!("closed form     {:.12}", expected);
    println!("scores at flip  {:?}", flippoint::net::softmax(&net.logits(&flip.point)?).as_slice());
    Ok(())
}
