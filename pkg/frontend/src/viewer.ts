import * as THREE from "three";
import { OrbitControls } from "three/addons/controls/OrbitControls.js";
import { MeshPayload } from "./types.js";

/** Three.js viewport with orbit controls; geometry is swapped in place. */
export class Viewer {
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private controls: OrbitControls;
  private current: THREE.Mesh | null = null;

  constructor(private container: HTMLElement) {
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setSize(container.clientWidth, container.clientHeight);
    container.appendChild(this.renderer.domElement);

    this.camera = new THREE.PerspectiveCamera(
      45, container.clientWidth / container.clientHeight, 0.01, 10);
    this.camera.position.set(1.3, 1.1, 1.4);
    this.camera.lookAt(0.5, 0.5, 0.5);

    this.controls = new OrbitControls(this.camera, this.renderer.domElement);
    this.controls.target.set(0.5, 0.5, 0.5);
    this.controls.update();

    this.scene.background = new THREE.Color(0x10141a);
    const key = new THREE.DirectionalLight(0xffffff, 2.2);
    key.position.set(2, 3, 2);
    this.scene.add(key);
    const fill = new THREE.DirectionalLight(0x8899ff, 0.8);
    fill.position.set(-2, 1, -1);
    this.scene.add(fill);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.35));

    const box = new THREE.Box3(new THREE.Vector3(0, 0, 0),
                               new THREE.Vector3(1, 1, 1));
    this.scene.add(new THREE.Box3Helper(box, new THREE.Color(0x2a3240)));

    window.addEventListener("resize", () => this.resize());
    this.animate();
  }

  private resize(): void {
    const w = this.container.clientWidth;
    const h = this.container.clientHeight;
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
    this.renderer.setSize(w, h);
  }

  private animate = (): void => {
    requestAnimationFrame(this.animate);
    this.controls.update();
    this.renderer.render(this.scene, this.camera);
  };

  /** Replace the displayed mesh with a server payload (never fabricates
   * geometry: positions/indices are used verbatim). */
  showMesh(payload: MeshPayload): void {
    if (this.current) {
      this.scene.remove(this.current);
      this.current.geometry.dispose();
      (this.current.material as THREE.Material).dispose();
      this.current = null;
    }
    if (payload.empty || payload.indices.length === 0) return;
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute(
      "position",
      new THREE.BufferAttribute(new Float32Array(payload.positions), 3));
    geometry.setIndex(payload.indices);
    geometry.computeVertexNormals();
    const material = new THREE.MeshStandardMaterial({
      color: 0x4fa3ff,
      roughness: 0.45,
      metalness: 0.05,
      side: THREE.DoubleSide,
    });
    this.current = new THREE.Mesh(geometry, material);
    this.scene.add(this.current);
  }
}
