use super::network::{CoreIds, Network};
use super::state::Unroll;
use super::ModelKind;
use crate::env::{Action, TaskId, CHANNELS, VIEW};
use crate::error::{Error, Result};
use crate::numerics::affine::backward_rows;
use crate::numerics::conv::conv3x3_relu_backward;
use crate::numerics::flstm::{row_backward, weight_grads};
use crate::numerics::lstm::cell_backward;
use crate::numerics::{matmul_strided, Real};

impl<F: Real> Network<F> {
    /// Reverse pass through every step of `rec`, accumulating into the
    /// parameter gradients. `d_logits` is `[steps·batch, actions]`, `d_values`
    /// and `d_comp` are `[steps·batch]`, all step-major, holding the loss
    /// gradient w.r.t. the policy logits, values and completion logits.
    /// No gradient enters through the state the unroll started from.
    pub fn backward(&mut self, rec: &Unroll<F>, d_logits: &[F], d_values: &[F], d_comp: &[F]) -> Result<()> {
        let n = rec.steps * rec.batch;
        let na = Action::COUNT;
        if d_logits.len() != n * na || d_values.len() != n || d_comp.len() != n {
            return Err(Error::dim("backward", &[d_logits.len(), d_values.len(), d_comp.len()], &[n * na, n, n]));
        }
        if n == 0 {
            return Ok(());
        }
        let expect = if self.kind() == ModelKind::Sem { 2 } else { 1 };
        if rec.cores.len() != expect {
            return Err(Error::Config("unroll was recorded by a different architecture".into()));
        }
        let cfg = self.config().clone();
        let ids = self.ids;
        let mut grads = self.params_mut().take_grads();
        let p = self.params();

        let fd = cfg.feature_dim();
        let od = cfg.obs_dim();
        let r = cfg.embed_dim;
        let bsz = rec.batch;

        // Heads.
        let mut dfeat = vec![F::ZERO; n * fd];
        let mut tmp = vec![F::ZERO; n * fd];
        for (w, b, dy, out) in [
            (ids.pol_w, ids.pol_b, d_logits, na),
            (ids.val_w, ids.val_b, d_values, 1),
            (ids.comp_w, ids.comp_b, d_comp, 1),
        ] {
            let (dw, db) = two_mut(&mut grads, w.0, b.0);
            backward_rows(&rec.feat, dy, n, fd, out, p.value(w), dw.data_mut(), db.data_mut(), Some(&mut tmp));
            add_into(&mut dfeat, &tmp);
        }

        let mut dobs = vec![F::ZERO; n * od];
        let mut demb = vec![F::ZERO; TaskId::COUNT * r];
        match ids.core {
            CoreIds::Sem { env_w, env_b, w1, w2, b: tb } => {
                let (he, ht) = (cfg.env_hidden, cfg.task_hidden);
                let (ra, rb) = (&rec.cores[0], &rec.cores[1]);
                let (zca, zcb) = (od + he, od + he + ht);
                let (w_env, w1v, w2v) = (p.value(env_w), p.value(w1), p.value(w2));
                let mut dpre_a = vec![F::ZERO; n * 4 * he];
                let mut dpre_b = vec![F::ZERO; n * 4 * ht];
                let mut du_b = vec![F::ZERO; n * r];
                let (mut ch_a, mut cc_a) = (vec![F::ZERO; bsz * he], vec![F::ZERO; bsz * he]);
                let (mut ch_b, mut cc_b) = (vec![F::ZERO; bsz * ht], vec![F::ZERO; bsz * ht]);
                let mut dh_a = vec![F::ZERO; bsz * he];
                let mut dh_b = vec![F::ZERO; bsz * ht];
                let mut dcp = vec![F::ZERO; bsz * ht.max(he)];
                let mut dv = vec![F::ZERO; bsz * r];
                let mut dz = vec![F::ZERO; bsz * zcb];
                let mut dhp = vec![F::ZERO; bsz * he];
                for t in (0..rec.steps).rev() {
                    let rows = t * bsz..(t + 1) * bsz;
                    for (k, row) in rows.clone().enumerate() {
                        for j in 0..ht {
                            dh_b[k * ht + j] = dfeat[row * fd + he + j] + ch_b[k * ht + j];
                        }
                    }
                    cell_backward(
                        &rb.gates[rows.start * 4 * ht..rows.end * 4 * ht],
                        &rb.c_prev[rows.start * ht..rows.end * ht],
                        &rb.c[rows.start * ht..rows.end * ht],
                        &dh_b,
                        &cc_b,
                        bsz,
                        ht,
                        &mut dpre_b[rows.start * 4 * ht..rows.end * 4 * ht],
                        &mut dcp[..bsz * ht],
                    );
                    row_backward(
                        &dpre_b[rows.start * 4 * ht..rows.end * 4 * ht],
                        &rb.u[rows.start * r..rows.end * r],
                        &rb.v[rows.start * r..rows.end * r],
                        bsz,
                        r,
                        4 * ht,
                        zcb,
                        w1v,
                        w2v,
                        &mut dv,
                        &mut du_b[rows.start * r..rows.end * r],
                        Some(&mut dz),
                    );
                    scatter_embedding(&mut demb, &dv, &rec.tasks[rows.clone()], r);
                    for (k, row) in rows.clone().enumerate() {
                        let keep = rec.keep_inner[row];
                        let zr = &dz[k * zcb..(k + 1) * zcb];
                        add_into(&mut dobs[row * od..(row + 1) * od], &zr[..od]);
                        for j in 0..ht {
                            ch_b[k * ht + j] = if keep { zr[od + he + j] } else { F::ZERO };
                            cc_b[k * ht + j] = if keep { dcp[k * ht + j] } else { F::ZERO };
                        }
                        for j in 0..he {
                            dh_a[k * he + j] = dfeat[row * fd + j] + zr[od + j] + ch_a[k * he + j];
                        }
                    }
                    cell_backward(
                        &ra.gates[rows.start * 4 * he..rows.end * 4 * he],
                        &ra.c_prev[rows.start * he..rows.end * he],
                        &ra.c[rows.start * he..rows.end * he],
                        &dh_a,
                        &cc_a,
                        bsz,
                        he,
                        &mut dpre_a[rows.start * 4 * he..rows.end * 4 * he],
                        &mut dcp[..bsz * he],
                    );
                    matmul_strided(
                        bsz,
                        4 * he,
                        he,
                        &dpre_a[rows.start * 4 * he..rows.end * 4 * he],
                        (4 * he, 1),
                        &w_env[od..],
                        (zca, 1),
                        F::ZERO,
                        &mut dhp,
                        he,
                    );
                    for (k, row) in rows.enumerate() {
                        let keep = rec.keep_outer[row];
                        for j in 0..he {
                            ch_a[k * he + j] = if keep { dhp[k * he + j] } else { F::ZERO };
                            cc_a[k * he + j] = if keep { dcp[k * he + j] } else { F::ZERO };
                        }
                    }
                }
                {
                    let (dw, db) = two_mut(&mut grads, env_w.0, env_b.0);
                    backward_rows(&ra.z, &dpre_a, n, zca, 4 * he, w_env, dw.data_mut(), db.data_mut(), None);
                }
                matmul_strided(n, 4 * he, od, &dpre_a, (4 * he, 1), w_env, (zca, 1), F::ONE, &mut dobs, od);
                let (dw1, dw2, db) = three_mut(&mut grads, w1.0, w2.0, tb.0);
                weight_grads(
                    &dpre_b,
                    &rb.s,
                    &du_b,
                    &rb.z,
                    n,
                    r,
                    4 * ht,
                    zcb,
                    dw1.data_mut(),
                    dw2.data_mut(),
                    db.data_mut(),
                );
            }
            CoreIds::Lstm { w, b: lb } => {
                let h = cfg.core_hidden();
                let rc = &rec.cores[0];
                let zc = od + r + h;
                let wv = p.value(w);
                let keep = if cfg.kind.resets_on_completion() { &rec.keep_inner } else { &rec.keep_outer };
                let mut dpre = vec![F::ZERO; n * 4 * h];
                let (mut ch, mut cc) = (vec![F::ZERO; bsz * h], vec![F::ZERO; bsz * h]);
                let mut dh = vec![F::ZERO; bsz * h];
                let mut dcp = vec![F::ZERO; bsz * h];
                let mut dhp = vec![F::ZERO; bsz * h];
                for t in (0..rec.steps).rev() {
                    let rows = t * bsz..(t + 1) * bsz;
                    for (k, row) in rows.clone().enumerate() {
                        for j in 0..h {
                            dh[k * h + j] = dfeat[row * fd + j] + ch[k * h + j];
                        }
                    }
                    let dp = &mut dpre[rows.start * 4 * h..rows.end * 4 * h];
                    cell_backward(
                        &rc.gates[rows.start * 4 * h..rows.end * 4 * h],
                        &rc.c_prev[rows.start * h..rows.end * h],
                        &rc.c[rows.start * h..rows.end * h],
                        &dh,
                        &cc,
                        bsz,
                        h,
                        dp,
                        &mut dcp,
                    );
                    matmul_strided(bsz, 4 * h, h, dp, (4 * h, 1), &wv[od + r..], (zc, 1), F::ZERO, &mut dhp, h);
                    for (k, row) in rows.enumerate() {
                        let kp = keep[row];
                        for j in 0..h {
                            ch[k * h + j] = if kp { dhp[k * h + j] } else { F::ZERO };
                            cc[k * h + j] = if kp { dcp[k * h + j] } else { F::ZERO };
                        }
                    }
                }
                {
                    let (dw, db) = two_mut(&mut grads, w.0, lb.0);
                    backward_rows(&rc.z, &dpre, n, zc, 4 * h, wv, dw.data_mut(), db.data_mut(), None);
                }
                let mut dx = vec![F::ZERO; n * (od + r)];
                matmul_strided(n, 4 * h, od + r, &dpre, (4 * h, 1), wv, (zc, 1), F::ZERO, &mut dx, od + r);
                for row in 0..n {
                    let src = &dx[row * (od + r)..(row + 1) * (od + r)];
                    add_into(&mut dobs[row * od..(row + 1) * od], &src[..od]);
                    let t = rec.tasks[row];
                    add_into(&mut demb[t * r..(t + 1) * r], &src[od..]);
                }
            }
            CoreIds::Factorized { w1, w2, b: fb } => {
                let h = cfg.core_hidden();
                let rc = &rec.cores[0];
                let zc = od + h;
                let (w1v, w2v) = (p.value(w1), p.value(w2));
                let keep = if cfg.kind.resets_on_completion() { &rec.keep_inner } else { &rec.keep_outer };
                let mut dpre = vec![F::ZERO; n * 4 * h];
                let mut du = vec![F::ZERO; n * r];
                let (mut ch, mut cc) = (vec![F::ZERO; bsz * h], vec![F::ZERO; bsz * h]);
                let mut dh = vec![F::ZERO; bsz * h];
                let mut dcp = vec![F::ZERO; bsz * h];
                let mut dv = vec![F::ZERO; bsz * r];
                let mut dz = vec![F::ZERO; bsz * zc];
                for t in (0..rec.steps).rev() {
                    let rows = t * bsz..(t + 1) * bsz;
                    for (k, row) in rows.clone().enumerate() {
                        for j in 0..h {
                            dh[k * h + j] = dfeat[row * fd + j] + ch[k * h + j];
                        }
                    }
                    cell_backward(
                        &rc.gates[rows.start * 4 * h..rows.end * 4 * h],
                        &rc.c_prev[rows.start * h..rows.end * h],
                        &rc.c[rows.start * h..rows.end * h],
                        &dh,
                        &cc,
                        bsz,
                        h,
                        &mut dpre[rows.start * 4 * h..rows.end * 4 * h],
                        &mut dcp,
                    );
                    row_backward(
                        &dpre[rows.start * 4 * h..rows.end * 4 * h],
                        &rc.u[rows.start * r..rows.end * r],
                        &rc.v[rows.start * r..rows.end * r],
                        bsz,
                        r,
                        4 * h,
                        zc,
                        w1v,
                        w2v,
                        &mut dv,
                        &mut du[rows.start * r..rows.end * r],
                        Some(&mut dz),
                    );
                    scatter_embedding(&mut demb, &dv, &rec.tasks[rows.clone()], r);
                    for (k, row) in rows.enumerate() {
                        let kp = keep[row];
                        let zr = &dz[k * zc..(k + 1) * zc];
                        add_into(&mut dobs[row * od..(row + 1) * od], &zr[..od]);
                        for j in 0..h {
                            ch[k * h + j] = if kp { zr[od + j] } else { F::ZERO };
                            cc[k * h + j] = if kp { dcp[k * h + j] } else { F::ZERO };
                        }
                    }
                }
                let (dw1, dw2, db) = three_mut(&mut grads, w1.0, w2.0, fb.0);
                weight_grads(
                    &dpre,
                    &rc.s,
                    &du,
                    &rc.z,
                    n,
                    r,
                    4 * h,
                    zc,
                    dw1.data_mut(),
                    dw2.data_mut(),
                    db.data_mut(),
                );
            }
        }
        add_into(grads[ids.emb.0].data_mut(), &demb);

        // Encoder.
        let area = VIEW * VIEW;
        let co = cfg.conv_out();
        let mut da2 = vec![F::ZERO; n * co];
        for row in 0..n {
            da2[row * co..(row + 1) * co].copy_from_slice(&dobs[row * od..row * od + co]);
        }
        let mut da1 = vec![F::ZERO; n * area * cfg.conv1];
        {
            let (dw, db) = two_mut(&mut grads, ids.conv2_w.0, ids.conv2_b.0);
            conv3x3_relu_backward(
                &rec.a1,
                &rec.a2,
                &mut da2,
                n,
                VIEW,
                cfg.conv1,
                cfg.conv2,
                p.value(ids.conv2_w),
                dw.data_mut(),
                db.data_mut(),
                Some(&mut da1),
            );
        }
        {
            let (dw, db) = two_mut(&mut grads, ids.conv1_w.0, ids.conv1_b.0);
            conv3x3_relu_backward(
                &rec.x0,
                &rec.a1,
                &mut da1,
                n,
                VIEW,
                CHANNELS,
                cfg.conv1,
                p.value(ids.conv1_w),
                dw.data_mut(),
                db.data_mut(),
                None,
            );
        }
        self.params_mut().restore_grads(grads);
        Ok(())
    }
}

fn add_into<F: Real>(dst: &mut [F], src: &[F]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn scatter_embedding<F: Real>(demb: &mut [F], dv: &[F], tasks: &[usize], r: usize) {
    for (k, &t) in tasks.iter().enumerate() {
        add_into(&mut demb[t * r..(t + 1) * r], &dv[k * r..(k + 1) * r]);
    }
}

fn two_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert!(a < b, "parameter order");
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

fn three_mut<T>(v: &mut [T], a: usize, b: usize, c: usize) -> (&mut T, &mut T, &mut T) {
    assert!(a < b && b < c, "parameter order");
    let (lo, rest) = v.split_at_mut(b);
    let (mid, hi) = rest.split_at_mut(c - b);
    (&mut lo[a], &mut mid[0], &mut hi[0])
}
