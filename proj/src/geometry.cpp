#include "c4d/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace c4d {

namespace {
Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}
}  // namespace

Pointmap unproject(const DepthMap& depth, const Intrinsics& K,
                   const CameraPose& pose) {
  const int w = depth.values.width();
  const int h = depth.values.height();
  Pointmap out(w, h, PointmapFrame::World);
  const Mat3 R = pose.rotation.toRotationMatrix();
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (!depth.validity.at(i, j)) continue;
      const double d = depth.values.at(i, j);
      const Vec3 cam((i - K.cx) / K.fx * d, (j - K.cy) / K.fy * d, d);
      out.points.at(i, j) = R * cam + pose.translation;
    }
  }
  return out;
}

Projection project(const Grid<Vec3>& world_points, const Intrinsics& K,
                   const CameraPose& pose) {
  const int w = world_points.width();
  const int h = world_points.height();
  Projection out;
  out.pixels = Grid<Vec2>(w, h, Vec2::Zero());
  out.depths = Grid<double>(w, h, 0.0);
  out.in_front = Grid<uint8_t>(w, h, 0);
  const Mat3 Rt = pose.rotation.toRotationMatrix().transpose();
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const Vec3 cam = Rt * (world_points.at(i, j) - pose.translation);
      out.depths.at(i, j) = cam.z();
      if (cam.z() > 1e-12) {
        out.in_front.at(i, j) = 1;
        out.pixels.at(i, j) = Vec2(K.fx * cam.x() / cam.z() + K.cx,
                                   K.fy * cam.y() / cam.z() + K.cy);
      }
    }
  }
  return out;
}

FlowField ego_flow(const DepthMap& depth_t, const Intrinsics& K_t,
                   const CameraPose& pose_t, const CameraPose& pose_tp,
                   const Intrinsics& K_tp, int frame_t, int frame_tp) {
  const int w = depth_t.values.width();
  const int h = depth_t.values.height();
  FlowField flow(frame_t, frame_tp, w, h);
  const Mat3 R = pose_t.rotation.toRotationMatrix();
  const Mat3 Rpt = pose_tp.rotation.toRotationMatrix().transpose();
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      if (!depth_t.validity.at(i, j)) continue;
      const double d = depth_t.values.at(i, j);
      const Vec3 cam((i - K_t.cx) / K_t.fx * d, (j - K_t.cy) / K_t.fy * d, d);
      const Vec3 world = R * cam + pose_t.translation;
      const Vec3 cam2 = Rpt * (world - pose_tp.translation);
      if (cam2.z() <= 1e-12) continue;
      const Vec2 px(K_tp.fx * cam2.x() / cam2.z() + K_tp.cx,
                    K_tp.fy * cam2.y() / cam2.z() + K_tp.cy);
      flow.displacement.at(i, j) = px - Vec2(i, j);
      flow.validity.at(i, j) = 1;
    }
  }
  return flow;
}

Similarity umeyama_align(const std::vector<Vec3>& src,
                         const std::vector<Vec3>& dst,
                         const std::vector<double>& weights, bool with_scale) {
  if (src.size() != dst.size())
    throw Error(ErrorCode::InvalidInput, "umeyama: size mismatch");
  if (src.size() < 3)
    throw Error(ErrorCode::DegenerateConfiguration, "umeyama: < 3 points");
  if (!weights.empty() && weights.size() != src.size())
    throw Error(ErrorCode::InvalidInput, "umeyama: weight size mismatch");

  const size_t n = src.size();
  double wsum = 0.0;
  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    const double wi = weights.empty() ? 1.0 : weights[i];
    wsum += wi;
    mu_s += wi * src[i];
    mu_d += wi * dst[i];
  }
  if (wsum <= 0.0)
    throw Error(ErrorCode::DegenerateConfiguration, "umeyama: zero weight");
  mu_s /= wsum;
  mu_d /= wsum;

  Mat3 cov = Mat3::Zero();
  double var_s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double wi = weights.empty() ? 1.0 : weights[i];
    const Vec3 ds = src[i] - mu_s;
    cov += wi * (dst[i] - mu_d) * ds.transpose();
    var_s += wi * ds.squaredNorm();
  }
  cov /= wsum;
  var_s /= wsum;
  if (var_s <= 0.0)
    throw Error(ErrorCode::DegenerateConfiguration,
                "umeyama: zero source spread");

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(1) < 1e-14 * std::max(svd.singularValues()(0), 1.0))
    throw Error(ErrorCode::DegenerateConfiguration,
                "umeyama: rank-deficient covariance");
  Vec3 s_diag = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
    s_diag(2) = -1.0;

  Similarity out;
  out.rotation = svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose();
  out.scale = with_scale
                  ? (svd.singularValues().dot(s_diag)) / var_s
                  : 1.0;
  out.translation = mu_d - out.scale * (out.rotation * mu_s);
  return out;
}

// R(q) v = v + 2 w (u x v) + 2 u x (u x v) for unit q = (w, u).
Eigen::Matrix<double, 3, 4> rotate_point_jacobian(const Quat& q, const Vec3& v) {
  const Vec3 u(q.x(), q.y(), q.z());
  const double w = q.w();
  Eigen::Matrix<double, 3, 4> jac;
  jac.col(0) = 2.0 * u.cross(v);
  jac.block<3, 3>(0, 1) =
      2.0 * (u.dot(v) * Mat3::Identity() + u * v.transpose() -
             2.0 * v * u.transpose() - w * skew(v));
  return jac;
}

Eigen::Matrix<double, 3, 4> rotate_point_transpose_jacobian(const Quat& q,
                                                            const Vec3& v) {
  Eigen::Matrix<double, 3, 4> jac = rotate_point_jacobian(q.conjugate(), v);
  jac.block<3, 3>(0, 1) *= -1.0;  // chain through the conjugate
  return jac;
}

Vec4 rotation_matrix_grad_to_quat(const Quat& q, const Mat3& dL_dR) {
  Vec4 g = Vec4::Zero();
  for (int j = 0; j < 3; ++j)
    g += rotate_point_jacobian(q, Vec3::Unit(j)).transpose() * dL_dR.col(j);
  return g;
}

Resection dlt_resection(const std::vector<Vec2>& pixels,
                        const std::vector<Vec3>& world) {
  const size_t n = pixels.size();
  if (n < 6 || world.size() != n)
    throw Error(ErrorCode::InsufficientData, "resection: need >= 6 points");

  // Hartley normalization of both point sets.
  Vec2 mu2 = Vec2::Zero();
  Vec3 mu3 = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mu2 += pixels[i];
    mu3 += world[i];
  }
  mu2 /= double(n);
  mu3 /= double(n);
  double s2 = 0.0, s3 = 0.0;
  for (size_t i = 0; i < n; ++i) {
    s2 += (pixels[i] - mu2).norm();
    s3 += (world[i] - mu3).norm();
  }
  s2 = std::sqrt(2.0) * n / std::max(s2, 1e-300);
  s3 = std::sqrt(3.0) * n / std::max(s3, 1e-300);

  Eigen::MatrixXd a(2 * n, 12);
  for (size_t i = 0; i < n; ++i) {
    const Vec2 x = s2 * (pixels[i] - mu2);
    const Vec3 X3 = s3 * (world[i] - mu3);
    const Vec4 X(X3.x(), X3.y(), X3.z(), 1.0);
    a.row(2 * i).setZero();
    a.block<1, 4>(2 * i, 4) = -X.transpose();
    a.block<1, 4>(2 * i, 8) = x.y() * X.transpose();
    a.block<1, 4>(2 * i + 1, 0) = X.transpose();
    a.block<1, 4>(2 * i + 1, 4).setZero();
    a.block<1, 4>(2 * i + 1, 8) = -x.x() * X.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> pn;
  pn << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), p(8), p(9), p(10), p(11);

  // Undo the normalization: P = T2^-1 Pn T3.
  Mat3 t2inv = Mat3::Identity();
  t2inv(0, 0) = t2inv(1, 1) = 1.0 / s2;
  t2inv(0, 2) = mu2.x();
  t2inv(1, 2) = mu2.y();
  Mat4 t3 = Mat4::Identity();
  t3.topLeftCorner<3, 3>() *= s3;
  t3.topRightCorner<3, 1>() = -s3 * mu3;
  Eigen::Matrix<double, 3, 4> P = t2inv * pn * t3;

  Mat3 M = P.topLeftCorner<3, 3>();
  if (M.determinant() < 0) {
    P = -P;
    M = -M;
  }
  if (std::abs(M.determinant()) < 1e-18)
    throw Error(ErrorCode::DegenerateConfiguration, "resection: singular M");

  // RQ decomposition of M via QR of its inverse: M = K R with K upper
  // triangular (positive diagonal) and R a rotation.
  const Mat3 minv = M.inverse();
  Eigen::HouseholderQR<Mat3> qr(minv);
  Mat3 qm = qr.householderQ();
  Mat3 rm = qm.transpose() * minv;
  Mat3 K = rm.inverse();
  Mat3 R = qm.transpose();
  // With det(M) > 0 and K's diagonal made positive, det(R) = +1 follows.
  const Vec3 sign(K(0, 0) >= 0 ? 1.0 : -1.0, K(1, 1) >= 0 ? 1.0 : -1.0,
                  K(2, 2) >= 0 ? 1.0 : -1.0);
  K = K * sign.asDiagonal();
  R = sign.asDiagonal() * R;
  K /= K(2, 2);

  const Vec3 center = -M.inverse() * P.col(3);

  Resection out;
  out.K.fx = K(0, 0);
  out.K.fy = K(1, 1);
  out.K.cx = K(0, 2);
  out.K.cy = K(1, 2);
  out.pose.rotation = Quat(Mat3(R.transpose()));
  out.pose.rotation.normalize();
  out.pose.translation = center;

  // Cheirality: the scene must lie in front of the camera.
  int front = 0;
  for (size_t i = 0; i < n; ++i)
    if ((R * (world[i] - center)).z() > 0) ++front;
  if (front * 2 < static_cast<int>(n))
    throw Error(ErrorCode::DegenerateConfiguration,
                "resection: points behind camera");
  return out;
}

}  // namespace c4d
